"""Minimal reverse-mode differentiation engine over numpy arrays.

A Tensor wraps an ndarray plus the closure that maps its output gradient to
parent gradients. Graph nodes are only materialized when some input requires
a gradient (and gradients are enabled), so inference runs tape-free through
the same code path.

Convention: a backward closure receives the gradient w.r.t. the node output
and returns one array (or None) per entry of ``_parents``, each safe for the
engine to own.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction on this thread (pure-inference forwards)."""
    previous = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)


def _as_tensor(x, like: np.ndarray | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: tuple, backward) -> Tensor:
    if _grad_enabled() and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward=backward)
    return Tensor(data)


def backward(root: Tensor) -> None:
    """Accumulate gradients of a scalar root into every reachable tensor."""
    if root.data.size != 1:
        raise ValueError("backward expects a scalar root")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones_like(root.data)
    for node in reversed(topo):
        if node._backward is None or node.grad is None:
            continue
        for p, g in zip(node._parents, node._backward(node.grad)):
            if g is None or not p.requires_grad:
                continue
            p.grad = g if p.grad is None else p.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g if g.shape == shape else g.reshape(shape)


def add(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.data)
    out = a.data + b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(out, (a, b), back)


def sub(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.data)
    out = a.data - b.data

    def back(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(out, (a, b), back)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    b = _as_tensor(b, a.data)
    out = a.data * b.data

    def back(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _node(out, (a, b), back)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _node(out, (a, b), back)


def transpose2(a: Tensor) -> Tensor:
    return _node(a.data.T, (a,), lambda g: (g.T,))


def reshape(a: Tensor, shape) -> Tensor:
    src = a.data.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0
    return _node(np.where(keep, a.data, 0), (a,), lambda g: (np.where(keep, g, 0),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return _node(t, (a,), lambda g: (g * (1.0 - t * t),))


def concat(tensors, axis: int) -> Tensor:
    parts = tuple(tensors)
    sizes = [p.data.shape[axis] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return np.split(g, splits, axis=axis)

    return _node(out, parts, back)


def stack(tensors, axis: int = 1) -> Tensor:
    parts = tuple(tensors)
    out = np.stack([p.data for p in parts], axis=axis)

    def back(g):
        return [np.take(g, i, axis=axis) for i in range(len(parts))]

    return _node(out, parts, back)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = a.data[index]

    def back(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _node(out, (a,), back)


def where_mask(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise select: mask picks from ``a``, otherwise ``b``."""
    out = np.where(mask, a.data, b.data)

    def back(g):
        ga = _unbroadcast(np.where(mask, g, 0), a.data.shape)
        gb = _unbroadcast(np.where(mask, 0, g), b.data.shape)
        return ga, gb

    return _node(out, (a, b), back)


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,))


def mul_const(a: Tensor, c: np.ndarray) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,))


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)
    return _node(out, (a,), lambda g: (np.broadcast_to(g, a.data.shape).astype(a.data.dtype, copy=True),))


def gather_frame(a: Tensor, frame_index: np.ndarray) -> Tensor:
    """Pick one time frame per example: out[b] = a[b, frame_index[b]]."""
    rows = np.arange(a.data.shape[0])
    out = a.data[rows, frame_index]

    def back(g):
        full = np.zeros_like(a.data)
        full[rows, frame_index] = g
        return (full,)

    return _node(out, (a,), back)


def reverse_valid(a: Tensor, lengths: np.ndarray) -> Tensor:
    """Reverse the first ``lengths[b]`` frames of each example in place of time.

    The permutation is its own inverse, so backward reapplies it.
    """
    n_batch, n_time = a.data.shape[0], a.data.shape[1]
    t = np.arange(n_time)
    idx = np.where(t[None, :] < lengths[:, None], lengths[:, None] - 1 - t[None, :], t[None, :])
    rows = np.arange(n_batch)[:, None]
    out = a.data[rows, idx]

    def back(g):
        return (g[rows, idx],)

    return _node(out, (a,), back)


def time_mask(lengths: np.ndarray, n_time: int, extra_dims: int, dtype) -> np.ndarray:
    """[B, T, 1, ...] 0/1 mask marking valid frames."""
    mask = (np.arange(n_time)[None, :] < lengths[:, None]).astype(dtype)
    return mask.reshape(mask.shape + (1,) * extra_dims)


def apply_time_mask(a: Tensor, lengths: np.ndarray) -> Tensor:
    """Zero all padded frames so padding never leaks across layers."""
    mask = time_mask(lengths, a.data.shape[1], a.data.ndim - 2, a.data.dtype)
    return mul_const(a, mask)
