"""Dense networks, Adam, and parameter checkpoints on top of the tape.

Networks are plain lists of (weight, bias) leaf tensors with an
activation per layer. Initialization is uniform fan-in scaling from a
dedicated seed, so a (dims, seed) pair pins the parameters exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from twinmig.autodiff import Tensor, tanh

CHECKPOINT_FORMAT = "twinmig-params/1"

_ACTIVATIONS = {"tanh": tanh, "linear": lambda t: t}


class DenseNet:
    """Feed-forward stack of affine layers with per-layer activations."""

    def __init__(
        self,
        dims: list[int],
        activations: list[str] | None = None,
        seed: int = 0,
        dtype=np.float32,
        out_scale: float = 1.0,
    ):
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        self.dims = list(dims)
        self.seed = seed
        self.dtype = np.dtype(dtype)
        if activations is None:
            activations = ["tanh"] * (len(dims) - 2) + ["linear"]
        if len(activations) != len(dims) - 1:
            raise ValueError("one activation per layer required")
        for act in activations:
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.activations = list(activations)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self.params: list[Tensor] = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-bound, bound, size=(fan_out,))
            if i == len(dims) - 2 and out_scale != 1.0:
                w *= out_scale
                b *= out_scale
            self.params.append(Tensor(w.astype(self.dtype)))
            self.params.append(Tensor(b.astype(self.dtype)))

    def forward(self, x) -> Tensor:
        """Run the stack; accepts a Tensor or array of shape (batch, in)."""
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.data.ndim != 2 or x.data.shape[1] != self.dims[0]:
            raise ValueError(f"expected input (*, {self.dims[0]}), got {x.data.shape}")
        for i, act in enumerate(self.activations):
            x = x @ self.params[2 * i] + self.params[2 * i + 1]
            x = _ACTIVATIONS[act](x)
        return x

    __call__ = forward

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def num_params(self) -> int:
        return sum(p.data.size for p in self.params)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.data.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        if flat.size != self.num_params():
            raise ValueError("flat vector size mismatch")
        offset = 0
        for p in self.params:
            n = p.data.size
            p.data = flat[offset : offset + n].reshape(p.data.shape).astype(self.dtype)
            offset += n

    def grad_flat(self) -> np.ndarray:
        return np.concatenate(
            [
                (p.grad if p.grad is not None else np.zeros_like(p.data)).ravel()
                for p in self.params
            ]
        )

    def copy(self) -> "DenseNet":
        clone = DenseNet(self.dims, self.activations, seed=self.seed, dtype=self.dtype)
        for dst, src in zip(clone.params, self.params):
            dst.data = src.data.copy()
        return clone

    def astype(self, dtype) -> "DenseNet":
        clone = self.copy()
        clone.dtype = np.dtype(dtype)
        for p in clone.params:
            p.data = p.data.astype(dtype)
        return clone


class Adam:
    """Bias-corrected Adam over a network's parameter list."""

    def __init__(self, net: DenseNet, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in net.params]
        self.v = [np.zeros_like(p.data) for p in net.params]

    def step(self) -> None:
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for i, p in enumerate(self.net.params):
            g = p.grad
            if g is None:
                continue
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / b1c
            v_hat = self.v[i] / b2c
            p.data = p.data - (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)


def soft_update(online: DenseNet, target: DenseNet, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, in place."""
    for t, o in zip(target.params, online.params):
        t.data = tau * o.data + (1.0 - tau) * t.data


def save_net(net: DenseNet, path: str | Path, extra: dict | None = None) -> None:
    """Versioned binary checkpoint with embedded dims and seed."""
    payload = {
        "format": np.array(CHECKPOINT_FORMAT),
        "dims": np.array(net.dims),
        "seed": np.array(net.seed),
        "activations": np.array(net.activations),
        "flat": net.get_flat(),
    }
    for key, value in (extra or {}).items():
        payload[f"extra_{key}"] = np.asarray(value)
    np.savez(path, **payload)


def load_net(path: str | Path, dtype=np.float32) -> DenseNet:
    with np.load(path, allow_pickle=False) as data:
        if str(data["format"]) != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {data['format']}")
        net = DenseNet(
            [int(d) for d in data["dims"]],
            [str(a) for a in data["activations"]],
            seed=int(data["seed"]),
            dtype=dtype,
        )
        net.set_flat(data["flat"].astype(net.dtype))
    return net


def sinusoidal_embedding(step: int, dim: int, dtype=np.float32) -> np.ndarray:
    """Fixed sin/cos encoding of a denoising step index."""
    half = dim // 2
    freqs = np.exp(-np.log(1e4) * np.arange(half) / max(half - 1, 1))
    angles = step * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)]).astype(dtype)
