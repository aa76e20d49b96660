"""Minimal reverse-mode autodiff over numpy arrays.

Just enough machinery for dense networks and the denoising chain: affine
maps, tanh/exp, elementwise arithmetic with broadcasting, reductions and
column concatenation. Every op records a closure that maps the upstream
gradient to parent gradients; ``backward`` walks the tape in reverse
topological order. A global no-grad mode turns recording off so rollouts
pay only the numpy cost.
"""

from __future__ import annotations

import contextlib

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the context."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """Array node of the computation graph."""

    __slots__ = ("data", "grad", "parents", "grad_fn")

    def __init__(self, data, parents=(), grad_fn=None):
        self.data = np.asarray(data)
        self.grad = None
        self.parents = parents if _GRAD_ENABLED else ()
        self.grad_fn = grad_fn if _GRAD_ENABLED else None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, leaf={self.grad_fn is None})"

    # -- graph construction helpers ------------------------------------

    def _lift(self, value) -> "Tensor":
        # python scalars adopt this tensor's dtype so float32 graphs stay float32
        if isinstance(value, Tensor):
            return value
        if isinstance(value, (int, float)):
            return Tensor(np.asarray(value, dtype=self.data.dtype))
        return Tensor(np.asarray(value))

    def __add__(self, other):
        other = self._lift(other)
        out_data = self.data + other.data
        return Tensor(
            out_data,
            (self, other),
            lambda g: (_unbroadcast(g, self.data.shape), _unbroadcast(g, other.data.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other):
        other = self._lift(other)
        return Tensor(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, self.data.shape), _unbroadcast(-g, other.data.shape)),
        )

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return Tensor(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        other = self._lift(other)
        return Tensor(
            self.data * other.data,
            (self, other),
            lambda g: (
                _unbroadcast(g * other.data, self.data.shape),
                _unbroadcast(g * self.data, other.data.shape),
            ),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        return Tensor(
            self.data / other.data,
            (self, other),
            lambda g: (
                _unbroadcast(g / other.data, self.data.shape),
                _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape),
            ),
        )

    def __matmul__(self, other):
        other = self._lift(other)
        return Tensor(
            self.data @ other.data,
            (self, other),
            lambda g: (g @ other.data.T, self.data.T @ g),
        )

    def __pow__(self, exponent: int):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        return Tensor(
            self.data ** exponent,
            (self,),
            lambda g: (g * exponent * self.data ** (exponent - 1),),
        )

    def sum(self, axis=None, keepdims=False):
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def grad_fn(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.data.shape).copy(),)

        return Tensor(out, (self,), grad_fn)

    def mean(self):
        n = self.data.size
        return Tensor(
            self.data.mean(),
            (self,),
            lambda g: (np.full_like(self.data, float(g) / n),),
        )

    def backward(self):
        """Reverse-accumulate gradients from this scalar node into leaves."""
        if self.data.size != 1:
            raise ValueError("backward expects a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node.parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node.grad_fn is None or node.grad is None:
                continue
            for parent, grad in zip(node.parents, node.grad_fn(node.grad)):
                parent.grad = grad if parent.grad is None else parent.grad + grad


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.data)
    return Tensor(out, (t,), lambda g: (g * (1.0 - out * out),))


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)
    return Tensor(out, (t,), lambda g: (g * out,))


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else Tensor(np.asarray(t)) for t in tensors]
    widths = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(widths)[:-1]
    return Tensor(
        np.concatenate([t.data for t in tensors], axis=axis),
        tuple(tensors),
        lambda g: tuple(np.split(g, splits, axis=axis)),
    )


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    """Shift-invariant softmax built from primitives."""
    shifted = t - np.max(t.data, axis=axis, keepdims=True)
    e = exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)
