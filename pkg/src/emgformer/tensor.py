"""Dense tensors with reverse-mode gradient accumulation.

Every model computation in this package runs through the ``Tensor`` class
below: a thin wrapper around a contiguous numpy array that records, for each
differentiable operation, a closure able to push gradients back to its
inputs.  Gradients are accumulated by summation; callers zero them explicitly
between optimizer steps.

Training runs in float32.  For gradient verification the whole graph can be
built in float64 via ``use_dtype("float64")``.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "ShapeError",
    "use_dtype",
    "default_dtype",
    "no_grad",
    "matmul",
    "softmax_lastdim",
    "layer_norm",
    "gelu",
    "cross_entropy",
    "concat",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)

_default_dtype = np.dtype(np.float32)
_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


def default_dtype() -> np.dtype:
    return _default_dtype


@contextmanager
def no_grad():
    """Skip tape recording inside the block (inference/evaluation)."""
    global _grad_enabled
    old = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = old


@contextmanager
def use_dtype(dtype):
    """Temporarily switch the dtype used for newly created tensors."""
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported tensor dtype {dtype}")
    old = _default_dtype
    _default_dtype = dtype
    try:
        yield
    finally:
        _default_dtype = old


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
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
    """A dense n-dimensional float array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_default_dtype)
        self.data: np.ndarray = np.ascontiguousarray(arr)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._parents: tuple = ()

    # -- introspection -----------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # -- gradient plumbing -------------------------------------------------

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Propagate gradients from this tensor to every tracked input."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar tensor")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError(f"seed gradient shape {grad.shape} != tensor shape {self.data.shape}")

        # Iterative topological order over the recorded graph.
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not part of the op set")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=_default_dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Optional[Callable]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    tracked = tuple(p for p in parents if p.requires_grad or p._parents)
    out.requires_grad = any(p.requires_grad for p in parents) and _grad_enabled
    needs_tape = out.requires_grad or any(p._backward is not None for p in parents)
    out._parents = tracked if needs_tape else ()
    out._backward = backward if needs_tape else None
    return out


# -- arithmetic --------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _wrap(a)
        s = float(b)
        data = a.data * s

        def backward_scalar(g):
            if a.requires_grad or a._parents:
                a._accumulate(g * s)

        return _make(data, (a,), backward_scalar)

    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, with broadcast batch dims."""
    a, b = _wrap(a), _wrap(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad or a._parents:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad or b._parents:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return _make(data, (a, b), backward)


# -- shape manipulation -------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    a = _wrap(a)
    shape = tuple(shape) if isinstance(shape, (tuple, list)) else (shape,)
    data = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(np.ascontiguousarray(data), (a,), backward)


def transpose(a: Tensor, axes) -> Tensor:
    a = _wrap(a)
    axes = tuple(axes)
    inv = np.argsort(axes)
    data = np.ascontiguousarray(a.data.transpose(axes))

    def backward(g):
        a._accumulate(g.transpose(inv))

    return _make(data, (a,), backward)


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None
               for p in parts)


def getitem(a: Tensor, idx) -> Tensor:
    a = _wrap(a)
    data = a.data[idx]
    basic = _is_basic_index(idx)

    def backward(g):
        buf = np.zeros_like(a.data)
        if basic:  # views never alias repeated elements, so += is exact
            buf[idx] += g
        else:
            np.add.at(buf, idx, g)
        a._accumulate(buf)

    return _make(np.ascontiguousarray(data), (a,), backward)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        for t, piece in zip(ts, np.split(g, splits, axis=axis)):
            if t.requires_grad or t._parents:
                t._accumulate(piece)

    return _make(data, ts, backward)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy() if np.ndim(g) else np.full_like(a.data, g))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return _make(np.asarray(data), (a,), backward)


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _wrap(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(reduce_sum(a, axis, keepdims), 1.0 / n)


# -- neural-net primitives ----------------------------------------------------


def softmax_lastdim(z: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtracted for stability.

    Raises on NaN input before exponentiation: a NaN entry would otherwise
    silently poison the whole probability row.
    """
    z = _wrap(z)
    if np.isnan(z.data).any():
        raise ValueError("softmax input contains NaN")
    shifted = z.data - z.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        z._accumulate((g - dot) * out)

    return _make(out, (z,), backward)


def layer_norm(z: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each last-axis slice to mean 0 / variance 1, then scale and shift."""
    z, gamma, beta = _wrap(z), _wrap(gamma), _wrap(beta)
    d = z.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm scale/shift must have shape ({d},), got {gamma.shape} and {beta.shape}")
    mu = z.data.mean(axis=-1, keepdims=True)
    xc = z.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        if gamma.requires_grad or gamma._parents:
            gamma._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad or beta._parents:
            beta._accumulate(g.reshape(-1, d).sum(axis=0))
        if z.requires_grad or z._parents:
            dxhat = g * gamma.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            z._accumulate(inv * (dxhat - m1 - xhat * m2))

    return _make(out, (z, gamma, beta), backward)


def gelu(z: Tensor) -> Tensor:
    """Gaussian-CDF gated activation x * Phi(x), exact (erf-based)."""
    z = _wrap(z)
    cdf = 0.5 * (1.0 + erf(z.data * _INV_SQRT2))
    out = z.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * z.data * z.data) * _INV_SQRT2PI
        z._accumulate(g * (cdf + z.data * pdf))

    return _make(out.astype(z.data.dtype, copy=False), (z,), backward)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability of the true class per row."""
    logits = _wrap(logits)
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects B x K logits, got {logits.shape}")
    b, k = logits.shape
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.shape[0] != b:
        raise ShapeError(f"{labels.shape[0]} labels for {b} logit rows")
    bad = np.nonzero((labels < 0) | (labels >= k))[0]
    if bad.size:
        row = int(bad[0])
        raise IndexError(f"label {int(labels[row])} out of range [0, {k}) at row {row}")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    nll = lse - shifted[np.arange(b), labels]
    out = np.asarray(nll.mean(), dtype=logits.data.dtype)

    def backward(g):
        p = np.exp(shifted - lse[:, None])
        p[np.arange(b), labels] -= 1.0
        logits._accumulate(p * (float(g) / b))

    return _make(out, (logits,), backward)
