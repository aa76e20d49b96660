"""Training loop: experience collection, double-critic TD learning, and
expected-Q actor updates through the full denoising chain.

Each epoch collects a fixed number of environment transitions with the
exploratory policy, then takes one Adam step on the actor (maximizing the
dot product of its processed distribution with the double-critic minimum)
and one on each critic (regressing both toward a shared bootstrapped
target computed with the target networks), followed by a soft target
update. Rewards entering the buffer are scaled by ``reward_scale``; all
logged metrics stay in raw environment units.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from twinmig.autodiff import Tensor, no_grad
from twinmig.config import ScenarioConfig
from twinmig.diffusion import DiffusionPolicy
from twinmig.env import HybridAction, MigrationEnv
from twinmig.nn import Adam, DenseNet, soft_update
from twinmig.world import rng_stream

STREAM_COLLECT = 20
STREAM_UPDATE = 21
STREAM_EVAL_POLICY = 22
STREAM_SAMPLER = 23
EVAL_EPISODE_BASE = 1_000_000

BUNDLE_FORMAT = "twinmig-bundle/1"

METRIC_COLUMNS = [
    "epoch",
    "train_reward_mean",
    "eval_reward_mean",
    "actor_loss",
    "critic_loss",
    "mean_selected_reputation",
    "mean_latency",
    "violation_count",
]


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; a diagnostic checkpoint is kept."""


class ReplayBuffer:
    """Preallocated FIFO ring of transitions."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, num_vehicles: int, num_servers: int):
        self.capacity = capacity
        self.size = 0
        self._next = 0
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.masks = np.zeros((capacity, num_vehicles, num_servers), dtype=bool)
        self.dist = np.zeros((capacity, action_dim), dtype=np.float32)
        self.server_idx = np.zeros((capacity, num_vehicles), dtype=np.int16)
        self.pre_idx = np.zeros((capacity, num_vehicles), dtype=np.int16)
        self.k_pre = np.zeros((capacity, num_vehicles), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.next_masks = np.zeros((capacity, num_vehicles, num_servers), dtype=bool)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.terminal = np.zeros(capacity, dtype=bool)

    def add(self, obs, masks, dist, action: HybridAction, next_obs, next_masks, reward, terminal) -> None:
        i = self._next
        self.obs[i] = obs
        self.masks[i] = masks
        self.dist[i] = dist
        self.server_idx[i] = action.server_idx
        self.pre_idx[i] = action.pre_idx
        self.k_pre[i] = action.k_pre
        self.next_obs[i] = next_obs
        self.next_masks[i] = next_masks
        self.reward[i] = reward
        self.terminal[i] = terminal
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = rng.integers(0, self.size, size=batch)
        return {
            "obs": self.obs[idx],
            "masks": self.masks[idx],
            "dist": self.dist[idx],
            "server_idx": self.server_idx[idx],
            "pre_idx": self.pre_idx[idx],
            "k_pre": self.k_pre[idx],
            "next_obs": self.next_obs[idx],
            "next_masks": self.next_masks[idx],
            "reward": self.reward[idx],
            "terminal": self.terminal[idx],
        }


@dataclass
class AgentBundle:
    """Actor, double critics, their targets, and optimizer state."""

    policy: DiffusionPolicy
    critic1: DenseNet
    critic2: DenseNet
    target_actor: DenseNet
    target_critic1: DenseNet
    target_critic2: DenseNet
    actor_opt: Adam
    critic1_opt: Adam
    critic2_opt: Adam
    config: ScenarioConfig
    force_pre: float | None = None
    epoch: int = 0

    @property
    def actor(self) -> DenseNet:
        return self.policy.net


def build_agent(config: ScenarioConfig, env: MigrationEnv, force_pre: float | None = None) -> AgentBundle:
    dtype = np.dtype(config.trainer.train_dtype)
    policy = DiffusionPolicy(
        env.num_vehicles,
        env.num_servers,
        env.obs_dim,
        config.policy,
        seed=config.seed,
        dtype=dtype,
    )
    critic_dims = [
        env.obs_dim + env.num_vehicles,
        config.policy.hidden_width,
        config.policy.hidden_width,
        policy.action_dim,
    ]
    critic1 = DenseNet(critic_dims, seed=config.seed + 101, dtype=dtype, out_scale=0.1)
    critic2 = DenseNet(critic_dims, seed=config.seed + 202, dtype=dtype, out_scale=0.1)
    return AgentBundle(
        policy=policy,
        critic1=critic1,
        critic2=critic2,
        target_actor=policy.net.copy(),
        target_critic1=critic1.copy(),
        target_critic2=critic2.copy(),
        actor_opt=Adam(policy.net, lr=config.trainer.actor_lr),
        critic1_opt=Adam(critic1, lr=config.trainer.critic_lr),
        critic2_opt=Adam(critic2, lr=config.trainer.critic_lr),
        config=config,
        force_pre=force_pre,
    )


# ---------------------------------------------------------------------------
# loss pieces (separable for the gradient-oracle checks)
# ---------------------------------------------------------------------------

def critic_input(obs: np.ndarray, k_pre: np.ndarray) -> np.ndarray:
    """Critics read the observation plus the continuous action components."""
    return np.concatenate([obs, k_pre], axis=1)


def critic_eval(obs: np.ndarray, k_pre: np.ndarray, critic1: DenseNet, critic2: DenseNet) -> np.ndarray:
    """Elementwise minimum of the two critics' Q vectors."""
    x = critic_input(obs, k_pre)
    with no_grad():
        q1 = critic1.forward(x).data
        q2 = critic2.forward(x).data
    return np.minimum(q1, q2)


def actor_loss(
    policy: DiffusionPolicy,
    obs: np.ndarray,
    mask_logits: np.ndarray,
    q: np.ndarray,
    noises: list[np.ndarray],
    force_pre: float | None = None,
    net: DenseNet | None = None,
) -> Tensor:
    """Batch-mean of -pi_theta(O) . q with gradients through all T steps."""
    x0 = policy.reverse_chain(obs, noises, net=net)
    dist = policy.process(x0, mask_logits, force_pre=force_pre)
    batch = obs.shape[0]
    return (dist * Tensor(q.astype(dist.data.dtype))).sum() * (-1.0 / batch)


def critic_targets(
    batch: dict[str, np.ndarray],
    policy: DiffusionPolicy,
    target_actor: DenseNet,
    target_critic1: DenseNet,
    target_critic2: DenseNet,
    gamma: float,
    noises: list[np.ndarray] | list[list[np.ndarray]],
    force_pre: float | None = None,
) -> np.ndarray:
    """Bootstrapped scalar targets y_hat per sample.

    The target actor regenerates its processed distribution at the next
    observation (eval-mode: no exploration noise, shares as produced); the
    target double-critic minimum is contracted against it. Passing several
    noise sets averages the bootstrap over that many chain draws, cutting
    the chain-noise variance of the target.
    """
    next_obs = batch["next_obs"]
    logits, _ = policy.mask_logits(batch["next_masks"])
    noise_sets = noises if isinstance(noises[0], list) else [noises]
    boot = np.zeros(next_obs.shape[0])
    with no_grad():
        for noise_set in noise_sets:
            x0 = policy.reverse_chain(next_obs, noise_set, net=target_actor)
            dist = policy.process(x0, logits, force_pre=force_pre).data
            k_next = dist[:, [policy.pre_fraction_index(v) for v in range(policy.num_vehicles)]]
            q_min = np.minimum(
                target_critic1.forward(critic_input(next_obs, k_next)).data,
                target_critic2.forward(critic_input(next_obs, k_next)).data,
            )
            boot += (dist * q_min).sum(axis=1)
    boot /= len(noise_sets)
    return batch["reward"] + gamma * (1.0 - batch["terminal"].astype(np.float64)) * boot


def action_weights(
    policy: DiffusionPolicy,
    server_idx: np.ndarray,
    pre_idx: np.ndarray,
    k_pre: np.ndarray,
) -> np.ndarray:
    """Contraction weights of one executed action in QVector layout.

    The taken discrete choices contribute as one-hot block entries and the
    taken share fills the continuous slot, so weights . QVector is the Q
    value of exactly the action that was executed.
    """
    batch = server_idx.shape[0]
    weights = np.zeros((batch, policy.action_dim), dtype=np.float64)
    rows = np.arange(batch)
    for v in range(policy.num_vehicles):
        base = v * policy.block
        weights[rows, base + server_idx[:, v] - 1] = 1.0
        weights[rows, base + policy.num_servers + pre_idx[:, v] - 1] = 1.0
        weights[rows, base + 2 * policy.num_servers] = k_pre[:, v]
    return weights


def critic_loss(
    batch: dict[str, np.ndarray],
    targets: np.ndarray,
    critic1: DenseNet,
    critic2: DenseNet,
    policy: DiffusionPolicy,
) -> Tensor:
    """Both critics regress the executed action's Q value to the same target."""
    x = critic_input(batch["obs"], batch["k_pre"])
    weights = action_weights(policy, batch["server_idx"], batch["pre_idx"], batch["k_pre"])
    n = targets.shape[0]
    total = None
    for critic in (critic1, critic2):
        q = critic.forward(x)
        y = (q * Tensor(weights.astype(q.data.dtype))).sum(axis=1)
        err = (Tensor(targets.astype(q.data.dtype)) - y) ** 2
        term = err.sum() * (1.0 / n)
        total = term if total is None else total + term
    return total


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalStats:
    mean_reward: float
    mean_latency: float
    mean_selected_reputation: float
    episodes: int
    violations: int = 0


def evaluate_policy(env: MigrationEnv, act_fn, episodes: int, eval_tag: int = 0) -> EvalStats:
    """Deterministic eval episodes with fixed per-episode seeds.

    ``act_fn(obs, masks, rng) -> HybridAction``; the per-step rng is a
    fixed stream of (seed, episode, slot), so repeated evaluations of the
    same policy are identical.
    """
    rewards, latencies, reps, violations = [], [], [], 0
    seed = env.cfg.seed
    for ep in range(episodes):
        episode_id = EVAL_EPISODE_BASE + eval_tag * 10_000 + ep
        obs = env.reset(episode=episode_id)
        for slot in range(env.cfg.world.slots_per_episode):
            rng = rng_stream(seed, STREAM_EVAL_POLICY, episode_id, slot)
            action = act_fn(obs, env.feasible_masks(), rng)
            result = env.step(action)
            rewards.append(result.reward)
            latencies.append(float(np.mean([b.total for b in result.latencies])))
            reps.append(result.selected_reputation_mean)
            violations += result.violations
            obs = result.observation
            if result.terminal:
                break
    return EvalStats(
        mean_reward=float(np.mean(rewards)),
        mean_latency=float(np.mean(latencies)),
        mean_selected_reputation=float(np.mean(reps)),
        episodes=episodes,
        violations=violations,
    )


def policy_act_fn(policy: DiffusionPolicy, force_pre: float | None = None, net: DenseNet | None = None):
    def act_fn(obs, masks, rng):
        out = policy.generate(obs, masks, rng, mode="eval", net=net, force_pre=force_pre)
        return HybridAction(out.server_idx, out.pre_idx, out.k_pre)

    return act_fn


# ---------------------------------------------------------------------------
# the training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    bundle: AgentBundle
    metrics: list[dict]
    env: MigrationEnv
    diverged: bool = False


def train(
    config: ScenarioConfig,
    force_pre: float | None = None,
    out_dir: str | Path | None = None,
    env: MigrationEnv | None = None,
    progress: bool = False,
) -> TrainResult:
    """Run the full collect/update loop and return the trained bundle.

    When ``out_dir`` is given, metrics stream to ``metrics.csv`` and
    checkpoints land there every ``checkpoint_interval`` epochs.
    """
    cfg = config.validate()
    tr = cfg.trainer
    env = env or MigrationEnv(cfg)
    bundle = build_agent(cfg, env, force_pre=force_pre)
    buffer = ReplayBuffer(
        tr.buffer_capacity, env.obs_dim, bundle.policy.action_dim, env.num_vehicles, env.num_servers
    )
    collect_rng = rng_stream(cfg.seed, STREAM_COLLECT)
    update_rng = rng_stream(cfg.seed, STREAM_UPDATE)
    sampler_rng = rng_stream(cfg.seed, STREAM_SAMPLER)

    out_path = Path(out_dir) if out_dir is not None else None
    writer = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        fh = (out_path / "metrics.csv").open("w", newline="")
        writer = csv.writer(fh)
        writer.writerow(METRIC_COLUMNS)

    metrics: list[dict] = []
    episode = 0
    obs = env.reset(episode=episode)
    masks = env.feasible_masks()
    last_eval = ""
    diverged = False

    try:
        for epoch in range(1, tr.epochs + 1):
            bundle.epoch = epoch
            rewards, latencies, reps, violations = [], [], [], 0
            for _ in range(tr.steps_per_epoch):
                out = bundle.policy.generate(
                    obs, masks, collect_rng, mode="train", force_pre=bundle.force_pre
                )
                action = HybridAction(out.server_idx, out.pre_idx, out.k_pre)
                result = env.step(action)
                next_masks = env.feasible_masks()
                buffer.add(
                    obs,
                    masks,
                    out.distribution,
                    action,
                    result.observation,
                    next_masks,
                    (result.reward - tr.reward_offset) * tr.reward_scale,
                    result.terminal,
                )
                rewards.append(result.reward)
                latencies.append(float(np.mean([b.total for b in result.latencies])))
                reps.append(result.selected_reputation_mean)
                violations += result.violations
                if result.terminal:
                    episode += 1
                    obs = env.reset(episode=episode)
                    masks = env.feasible_masks()
                else:
                    obs = result.observation
                    masks = next_masks

            a_loss = c_loss = math.nan
            if buffer.size >= tr.batch_size:
                batch = buffer.sample(tr.batch_size, sampler_rng)
                a_loss, c_loss = _update(bundle, batch, update_rng)
                if not (math.isfinite(a_loss) and math.isfinite(c_loss)):
                    diverged = True
                    if out_path is not None:
                        save_bundle(bundle, out_path / "diverged_checkpoint.npz")
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch} (actor {a_loss}, critic {c_loss})"
                    )

            if tr.eval_interval > 0 and epoch % tr.eval_interval == 0:
                stats = evaluate_policy(
                    env,
                    policy_act_fn(bundle.policy, force_pre=bundle.force_pre),
                    tr.eval_episodes,
                )
                last_eval = f"{stats.mean_reward:.6f}"
                # collection continues from a fresh episode after eval resets
                episode += 1
                obs = env.reset(episode=episode)
                masks = env.feasible_masks()

            row = {
                "epoch": epoch,
                "train_reward_mean": f"{np.mean(rewards):.6f}",
                "eval_reward_mean": last_eval,
                "actor_loss": "" if math.isnan(a_loss) else f"{a_loss:.6f}",
                "critic_loss": "" if math.isnan(c_loss) else f"{c_loss:.6f}",
                "mean_selected_reputation": f"{np.mean(reps):.6f}",
                "mean_latency": f"{np.mean(latencies):.6f}",
                "violation_count": violations,
            }
            metrics.append(row)
            if writer is not None:
                writer.writerow([row[c] for c in METRIC_COLUMNS])
            if progress and (epoch % max(1, tr.epochs // 20) == 0 or epoch == 1):
                print(
                    f"epoch {epoch}/{tr.epochs} train {row['train_reward_mean']}"
                    f" eval {last_eval or '-'} closs {row['critic_loss'] or '-'}",
                    flush=True,
                )
            if out_path is not None and tr.checkpoint_interval > 0 and epoch % tr.checkpoint_interval == 0:
                save_bundle(bundle, out_path / f"checkpoint_{epoch:06d}.npz")
    finally:
        if writer is not None:
            fh.close()

    if out_path is not None:
        save_bundle(bundle, out_path / "final_checkpoint.npz")
    return TrainResult(bundle=bundle, metrics=metrics, env=env, diverged=diverged)


def _update(bundle: AgentBundle, batch: dict[str, np.ndarray], rng: np.random.Generator) -> tuple[float, float]:
    """One actor step, one step per critic, then soft target updates."""
    cfg = bundle.config.trainer
    policy = bundle.policy
    n = batch["obs"].shape[0]

    q = critic_eval(batch["obs"], batch["k_pre"], bundle.critic1, bundle.critic2)
    logits, _ = policy.mask_logits(batch["masks"])
    noises = policy.draw_chain_noise(n, rng)
    policy.net.zero_grad()
    a_loss = actor_loss(policy, batch["obs"], logits, q, noises, force_pre=bundle.force_pre)
    a_loss.backward()
    if bundle.epoch > cfg.actor_warmup_epochs:
        # linear decay from actor_lr to actor_lr_final across the run
        total = bundle.config.trainer.epochs
        frac = min(1.0, bundle.epoch / max(total, 1))
        bundle.actor_opt.lr = cfg.actor_lr + (cfg.actor_lr_final - cfg.actor_lr) * frac
        bundle.actor_opt.step()

    target_noises = [policy.draw_chain_noise(n, rng) for _ in range(cfg.target_chain_draws)]
    targets = critic_targets(
        batch,
        policy,
        bundle.target_actor,
        bundle.target_critic1,
        bundle.target_critic2,
        cfg.discount,
        target_noises,
        force_pre=bundle.force_pre,
    )
    bundle.critic1.zero_grad()
    bundle.critic2.zero_grad()
    c_loss = critic_loss(batch, targets, bundle.critic1, bundle.critic2, policy)
    c_loss.backward()
    bundle.critic1_opt.step()
    bundle.critic2_opt.step()

    soft_update(policy.net, bundle.target_actor, cfg.soft_update)
    soft_update(bundle.critic1, bundle.target_critic1, cfg.soft_update)
    soft_update(bundle.critic2, bundle.target_critic2, cfg.soft_update)
    return float(a_loss.data), float(c_loss.data)


# ---------------------------------------------------------------------------
# bundle checkpoints
# ---------------------------------------------------------------------------

def save_bundle(bundle: AgentBundle, path: str | Path) -> None:
    nets = {
        "actor": bundle.policy.net,
        "critic1": bundle.critic1,
        "critic2": bundle.critic2,
        "target_actor": bundle.target_actor,
        "target_critic1": bundle.target_critic1,
        "target_critic2": bundle.target_critic2,
    }
    payload = {"format": np.array(BUNDLE_FORMAT), "epoch": np.array(bundle.epoch), "seed": np.array(bundle.config.seed)}
    payload["force_pre"] = np.array(np.nan if bundle.force_pre is None else bundle.force_pre)
    for name, net in nets.items():
        payload[f"{name}_dims"] = np.array(net.dims)
        payload[f"{name}_flat"] = net.get_flat()
    np.savez(path, **payload)


def load_bundle_into(bundle: AgentBundle, path: str | Path) -> AgentBundle:
    """Restore parameters from a checkpoint into a freshly built bundle."""
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != BUNDLE_FORMAT:
            raise ValueError(f"unsupported bundle format {data['format']}")
        for name, net in (
            ("actor", bundle.policy.net),
            ("critic1", bundle.critic1),
            ("critic2", bundle.critic2),
            ("target_actor", bundle.target_actor),
            ("target_critic1", bundle.target_critic1),
            ("target_critic2", bundle.target_critic2),
        ):
            dims = [int(d) for d in data[f"{name}_dims"]]
            if dims != net.dims:
                raise ValueError(f"{name} dims mismatch: checkpoint {dims} vs agent {net.dims}")
            net.set_flat(data[f"{name}_flat"].astype(net.dtype))
        bundle.epoch = int(data["epoch"])
        fp = float(data["force_pre"])
        bundle.force_pre = None if math.isnan(fp) else fp
    return bundle
