"""Hybrid-action diffusion actor.

The actor denoises standard-normal noise into a composite vector of
length V*(2S+1): per vehicle, S logits for the serving server, S logits
for the pre-migration server, and one scalar for the pre-migrated share.
Each denoising step subtracts a tanh-squashed network prediction from the
running sample; after the chain, infeasible-server logits are pushed to a
large negative sentinel, the logit blocks are softmaxed, and the share is
mapped through (tanh(x)+1)/2 into [0, 1].

Gradients flow through the entire chain: the reverse update is written in
tape ops with the per-step noise supplied as constants (reparameterized),
so one backward pass reaches the network through all T steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from twinmig.autodiff import Tensor, concat, exp, no_grad, tanh
from twinmig.config import PolicyParams
from twinmig.nn import DenseNet, sinusoidal_embedding

MASK_SENTINEL = -1e9


@dataclass(frozen=True)
class DiffusionSchedule:
    """Noise schedule tables, 1-indexed by denoising step (index 0 is the empty product)."""

    steps: int
    betas: np.ndarray  # beta_t, index 0 unused
    alphas: np.ndarray  # 1 - beta_t
    alpha_bars: np.ndarray  # cumulative product, alpha_bar_0 = 1
    beta_tildes: np.ndarray  # posterior variance, beta_tilde_1 = 0

    def noise_scale(self, t: int, mode: str = "paper") -> float:
        """Per-step noise amplitude of the reverse update."""
        if mode == "paper":
            return float((self.beta_tildes[t] / 2.0) ** 2)
        if mode == "standard":
            return float(np.sqrt(self.beta_tildes[t]))
        raise ValueError(f"unknown noise scale mode {mode!r}")


def build_schedule(steps: int, beta_min: float, beta_max: float) -> DiffusionSchedule:
    """Linear beta schedule over ``steps`` denoising steps."""
    if steps < 1:
        raise ValueError("need at least one denoising step")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ValueError("need 0 < beta_min <= beta_max < 1")
    betas = np.concatenate([[np.nan], np.linspace(beta_min, beta_max, steps)])
    alphas = 1.0 - betas
    alpha_bars = np.empty(steps + 1)
    alpha_bars[0] = 1.0
    alpha_bars[1:] = np.cumprod(alphas[1:])
    beta_tildes = np.empty(steps + 1)
    beta_tildes[0] = np.nan
    for t in range(1, steps + 1):
        beta_tildes[t] = (1.0 - alpha_bars[t - 1]) / (1.0 - alpha_bars[t]) * betas[t]
    return DiffusionSchedule(steps, betas, alphas, alpha_bars, beta_tildes)


def forward_noise(
    x0: np.ndarray, t: int, schedule: DiffusionSchedule, rng: np.random.Generator
) -> np.ndarray:
    """Single-shot forward noising to step ``t`` (test instrumentation only;
    decision generation never runs the forward process)."""
    if not 1 <= t <= schedule.steps:
        raise ValueError(f"step {t} outside 1..{schedule.steps}")
    a_bar = schedule.alpha_bars[t]
    return np.sqrt(a_bar) * x0 + np.sqrt(1.0 - a_bar) * rng.standard_normal(x0.shape)


@dataclass
class PolicyOutput:
    """Processed distribution plus the action drawn from it."""

    distribution: np.ndarray  # (V*(2S+1),) processed composite vector
    server_idx: np.ndarray  # (V,) 1-based serving-server choice
    pre_idx: np.ndarray  # (V,) 1-based pre-migration choice
    k_pre: np.ndarray  # (V,) share in [0, 1]
    repair_needed: np.ndarray  # (V,) bool, true when no server was feasible


class DiffusionPolicy:
    """Observation-conditioned reverse-chain generator of hybrid actions."""

    def __init__(
        self,
        num_vehicles: int,
        num_servers: int,
        obs_dim: int,
        params: PolicyParams,
        seed: int = 0,
        dtype=np.float32,
    ):
        self.num_vehicles = num_vehicles
        self.num_servers = num_servers
        self.obs_dim = obs_dim
        self.params = params
        self.dtype = np.dtype(dtype)
        self.block = 2 * num_servers + 1
        self.action_dim = num_vehicles * self.block
        self.schedule = build_schedule(params.denoise_steps, params.beta_min, params.beta_max)
        in_dim = self.action_dim + params.time_embed_dim + obs_dim
        self.net = DenseNet(
            [in_dim, params.hidden_width, params.hidden_width, self.action_dim],
            seed=seed,
            dtype=dtype,
        )
        self._embeds = {
            t: sinusoidal_embedding(t, params.time_embed_dim, dtype)
            for t in range(1, params.denoise_steps + 1)
        }
        # layout constants: which entries are server logits, and their block ids
        sel = np.zeros(self.action_dim, dtype=dtype)
        groups = np.zeros((self.action_dim, 3 * num_vehicles), dtype=dtype)
        for v in range(num_vehicles):
            base = v * self.block
            sel[base : base + 2 * num_servers] = 1.0
            groups[base : base + num_servers, 3 * v] = 1.0
            groups[base + num_servers : base + 2 * num_servers, 3 * v + 1] = 1.0
            groups[base + 2 * num_servers, 3 * v + 2] = 1.0
        self._sel = sel
        self._groups = groups
        # precomputed reverse-update coefficients, 1-indexed (index 0 unused)
        sched = self.schedule
        self._c_eps = np.zeros(sched.steps + 1, dtype=dtype)
        self._c_eps[1:] = sched.betas[1:] / np.sqrt(1.0 - sched.alpha_bars[1:])
        self._c_x = np.ones(sched.steps + 1, dtype=dtype)
        self._c_x[1:] = 1.0 / np.sqrt(sched.alphas[1:])
        self._scales = np.array(
            [0.0] + [sched.noise_scale(t, params.noise_scale) for t in range(1, sched.steps + 1)],
            dtype=dtype,
        )

    # ------------------------------------------------------------------
    # layout helpers
    # ------------------------------------------------------------------

    def server_block(self, v: int) -> slice:
        return slice(v * self.block, v * self.block + self.num_servers)

    def pre_server_block(self, v: int) -> slice:
        return slice(v * self.block + self.num_servers, v * self.block + 2 * self.num_servers)

    def pre_fraction_index(self, v: int) -> int:
        return v * self.block + 2 * self.num_servers

    def mask_logits(self, masks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Additive sentinel logits from feasibility masks.

        ``masks`` is (V, S) or (B, V, S) boolean, true = feasible. A
        vehicle with no feasible server gets an unmasked block (the
        environment repairs the resulting action) and is flagged.
        """
        masks = np.asarray(masks, dtype=bool)
        squeeze = masks.ndim == 2
        if squeeze:
            masks = masks[None]
        batch = masks.shape[0]
        empty = ~masks.any(axis=2)  # (B, V)
        usable = np.where(empty[:, :, None], True, masks)
        logits = np.zeros((batch, self.action_dim), dtype=self.dtype)
        block = np.where(usable, 0.0, MASK_SENTINEL).astype(self.dtype)
        for v in range(self.num_vehicles):
            logits[:, self.server_block(v)] = block[:, v]
            logits[:, self.pre_server_block(v)] = block[:, v]
        return (logits[0] if squeeze else logits), (empty[0] if squeeze else empty)

    # ------------------------------------------------------------------
    # reverse chain and processing
    # ------------------------------------------------------------------

    def draw_chain_noise(self, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
        """Pre-draw x_T plus one epsilon per step (reparameterized inputs)."""
        draws = [rng.standard_normal((batch, self.action_dim)).astype(self.dtype)]
        for _ in range(self.schedule.steps):
            draws.append(rng.standard_normal((batch, self.action_dim)).astype(self.dtype))
        return draws

    def denoise_step(
        self,
        x: Tensor,
        t: int,
        obs_t: Tensor,
        eps: np.ndarray | None,
        net: DenseNet | None = None,
    ) -> Tensor:
        """One reverse update x_t -> x_{t-1}.

        The mean subtracts the tanh-squashed network prediction from the
        running sample; the reparameterized noise ``eps`` enters as a
        constant so gradients flow only through the network. At t = 1 the
        posterior variance is zero and the step is deterministic.
        """
        net = net or self.net
        batch = x.data.shape[0]
        emb = np.broadcast_to(self._embeds[t], (batch, self.params.time_embed_dim))
        raw = net.forward(concat([x, Tensor(emb.copy()), obs_t], axis=1))
        mu = (x - tanh(raw) * float(self._c_eps[t])) * float(self._c_x[t])
        scale = float(self._scales[t])
        if scale != 0.0 and eps is not None:
            return mu + Tensor(scale * eps)
        return mu

    def reverse_chain(self, obs: np.ndarray, noises: list[np.ndarray], net: DenseNet | None = None) -> Tensor:
        """Run all T denoising steps; returns the raw composite sample."""
        obs_t = Tensor(np.asarray(obs, dtype=self.dtype))
        x = Tensor(noises[0])
        for i, t in enumerate(range(self.schedule.steps, 0, -1)):
            x = self.denoise_step(x, t, obs_t, noises[1 + i], net=net)
        return x

    def process(self, x0: Tensor, mask_logits: np.ndarray, force_pre: float | None = None) -> Tensor:
        """Masked blockwise softmax on server logits, bounded map on shares.

        Implemented with indicator-matrix reductions so it batches and
        differentiates without per-block python loops.
        """
        if mask_logits.ndim == 1:
            mask_logits = mask_logits[None]
        z = x0 + Tensor(mask_logits.astype(self.dtype))
        e = exp(z)  # masked entries underflow to exactly 0
        denom = (e @ Tensor(self._groups)) @ Tensor(self._groups.T)
        soft = e / denom
        share = (tanh(x0 * (1.0 / self.params.share_temperature)) + 1.0) * 0.5
        if force_pre is not None:
            share = share * 0.0 + float(force_pre)
        sel = Tensor(np.broadcast_to(self._sel, soft.data.shape).copy())
        return soft * sel + share * (1.0 - sel)

    # ------------------------------------------------------------------
    # action generation
    # ------------------------------------------------------------------

    def generate(
        self,
        obs: np.ndarray,
        masks: np.ndarray,
        rng: np.random.Generator,
        mode: str = "train",
        net: DenseNet | None = None,
        force_pre: float | None = None,
    ) -> PolicyOutput:
        """Produce one processed distribution and a hybrid action from it.

        Train mode runs one chain, samples server indices categorically,
        and perturbs each share with clipped Gaussian exploration noise.
        Eval mode estimates the policy's expected output by averaging the
        processed distribution over ``eval_chain_draws`` chains, then takes
        argmaxes and leaves the averaged shares untouched.
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        logits, empty = self.mask_logits(masks)
        draws = 1 if mode == "train" else max(1, self.params.eval_chain_draws)
        with no_grad():
            dist = np.zeros(self.action_dim, dtype=self.dtype)
            for _ in range(draws):
                noises = self.draw_chain_noise(1, rng)
                x0 = self.reverse_chain(obs[None], noises, net=net)
                dist = dist + self.process(x0, logits[None], force_pre=force_pre).data[0]
            dist = dist / draws
        server_idx = np.empty(self.num_vehicles, dtype=np.int64)
        pre_idx = np.empty(self.num_vehicles, dtype=np.int64)
        k_pre = np.empty(self.num_vehicles)
        for v in range(self.num_vehicles):
            probs_s = dist[self.server_block(v)]
            probs_sp = dist[self.pre_server_block(v)]
            if mode == "train":
                server_idx[v] = 1 + _categorical(probs_s, rng)
                pre_idx[v] = 1 + _categorical(probs_sp, rng)
            else:
                server_idx[v] = 1 + int(np.argmax(probs_s))
                pre_idx[v] = 1 + int(np.argmax(probs_sp))
            share = float(dist[self.pre_fraction_index(v)])
            if force_pre is not None:
                k_pre[v] = force_pre
            elif mode == "train":
                k_pre[v] = float(
                    np.clip(share + self.params.exploration_sigma * rng.standard_normal(), 0.0, 1.0)
                )
            else:
                k_pre[v] = share
        return PolicyOutput(
            distribution=dist,
            server_idx=server_idx,
            pre_idx=pre_idx,
            k_pre=k_pre,
            repair_needed=np.asarray(empty, dtype=bool),
        )


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Cumulative-sum draw, tolerant of float32 normalization slack."""
    cum = np.cumsum(probs)
    total = cum[-1]
    if total <= 0.0:
        return int(rng.integers(len(probs)))
    return int(np.searchsorted(cum, rng.random() * total, side="right").clip(0, len(probs) - 1))
