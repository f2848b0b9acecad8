"""Minimal reverse-mode differentiation over dense numpy tensors.

Each ``DiffValue`` stores its forward data plus a backward closure and parent
references; together these form the operation tape. ``backward`` on a scalar
loss walks that tape once in reverse topological order, accumulates gradients
into every value that requires them, and then releases the tape so graph
memory is freed and a second backward on the same loss is an error.

Values that do not require gradients (plain inputs) record no closures, so
their ``grad`` stays None: the gradient of anything off the path to the loss
is zero.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf, expit

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)


class DiffValue:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_released")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[DiffValue, ...] = ()
        self._backward = None
        self._released = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def _accumulate(self, g: np.ndarray) -> None:
        self.grad = g if self.grad is None else self.grad + g

    def __repr__(self) -> str:
        return f"DiffValue(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; python scalars keep the array dtype
    def __add__(self, other):
        return shift(self, other) if isinstance(other, (int, float)) else add(self, other)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return shift(self, -other)
        return add(self, neg(other))

    def __rsub__(self, other):
        if isinstance(other, (int, float)):
            return shift(neg(self), other)
        return add(other, neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return scale(self, other) if isinstance(other, (int, float)) else mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        return scale(self, 1.0 / other) if isinstance(other, (int, float)) else div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data) -> DiffValue:
    """A trainable leaf; gradients accumulate into ``.grad``."""
    return DiffValue(np.array(data), requires_grad=True)


def constant(data) -> DiffValue:
    return DiffValue(data, requires_grad=False)


def as_value(x) -> DiffValue:
    return x if isinstance(x, DiffValue) else DiffValue(np.asarray(x))


def _make(data, parents: tuple[DiffValue, ...], backward) -> DiffValue:
    out = DiffValue(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> DiffValue:
    a, b = as_value(a), as_value(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), backward)


def neg(a) -> DiffValue:
    a = as_value(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(-g)

    return _make(-a.data, (a,), backward)


def scale(a, s: float) -> DiffValue:
    a = as_value(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * s)

    return _make(a.data * s, (a,), backward)


def shift(a, s: float) -> DiffValue:
    a = as_value(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)

    return _make(a.data + s, (a,), backward)


def mul(a, b) -> DiffValue:
    a, b = as_value(a), as_value(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), backward)


def div(a, b) -> DiffValue:
    a, b = as_value(a), as_value(b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(a.data / b.data, (a, b), backward)


def matmul(a, b) -> DiffValue:
    a, b = as_value(a), as_value(b)
    ad, bd = a.data, b.data

    def backward(g):
        if ad.ndim == 2 and bd.ndim == 2:
            if a.requires_grad:
                a._accumulate(g @ bd.T)
            if b.requires_grad:
                b._accumulate(ad.T @ g)
        elif ad.ndim == 2 and bd.ndim == 1:
            if a.requires_grad:
                a._accumulate(np.outer(g, bd))
            if b.requires_grad:
                b._accumulate(ad.T @ g)
        elif ad.ndim == 1 and bd.ndim == 2:
            if a.requires_grad:
                a._accumulate(bd @ g)
            if b.requires_grad:
                b._accumulate(np.outer(ad, g))
        elif ad.ndim == 1 and bd.ndim == 1:
            if a.requires_grad:
                a._accumulate(g * bd)
            if b.requires_grad:
                b._accumulate(g * ad)
        else:
            raise ValueError(f"unsupported matmul ranks {ad.ndim} @ {bd.ndim}")

    return _make(ad @ bd, (a, b), backward)


def vsum(a, axis=None, keepdims: bool = False) -> DiffValue:
    a = as_value(a)

    def backward(g):
        if not a.requires_grad:
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
        else:
            if not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def vmean(a, axis=None, keepdims: bool = False) -> DiffValue:
    a = as_value(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return scale(vsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def concat(values, axis: int = 0) -> DiffValue:
    values = [as_value(v) for v in values]
    sizes = [v.data.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for v, start, stop in zip(values, offsets[:-1], offsets[1:]):
            if v.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(start, stop)
                v._accumulate(g[tuple(index)])

    return _make(np.concatenate([v.data for v in values], axis=axis), tuple(values), backward)


def reshape(a, shape) -> DiffValue:
    a = as_value(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def gather(a, index) -> DiffValue:
    """Select rows along axis 0; repeated indices accumulate on backward."""
    a = as_value(a)
    index = np.asarray(index)

    def backward(g):
        if a.requires_grad:
            ga = np.zeros_like(a.data)
            np.add.at(ga, index, g)
            a._accumulate(ga)

    return _make(a.data[index], (a,), backward)


def segment_sum(a, segment_ids: np.ndarray, num_segments: int) -> DiffValue:
    """Sum rows into segments; ``segment_ids`` must be sorted ascending.

    Rows of one segment are reduced sequentially in their given order, which
    keeps results reproducible for a fixed row ordering. Empty segments yield
    zero rows.
    """
    a = as_value(a)
    segment_ids = np.asarray(segment_ids)
    if segment_ids.size and np.any(np.diff(segment_ids) < 0):
        raise ValueError("segment_ids must be sorted ascending")

    counts = np.bincount(segment_ids, minlength=num_segments)
    out_data = np.zeros((num_segments,) + a.data.shape[1:], dtype=a.data.dtype)
    if segment_ids.size:
        nonempty = counts > 0
        starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
        out_data[nonempty] = np.add.reduceat(a.data, starts[nonempty], axis=0)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g[segment_ids])

    return _make(out_data, (a,), backward)


def vexp(a) -> DiffValue:
    a = as_value(a)
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return _make(out_data, (a,), backward)


def vlog(a) -> DiffValue:
    a = as_value(a)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _make(np.log(a.data), (a,), backward)


def sigmoid(a) -> DiffValue:
    a = as_value(a)
    out_data = expit(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def gelu(a) -> DiffValue:
    """Gaussian-error linear unit, exact erf form."""
    a = as_value(a)
    cdf = 0.5 * (1.0 + erf(a.data / _SQRT2))

    def backward(g):
        if a.requires_grad:
            pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT_2PI
            a._accumulate(g * (cdf + a.data * pdf))

    return _make(a.data * cdf, (a,), backward)


def logsumexp(a) -> DiffValue:
    """Stable log-sum-exp of a 1-D value; the max shift is a constant."""
    a = as_value(a)
    top = float(np.max(a.data))
    return shift(vlog(vsum(vexp(shift(a, -top)))), top)


def backward(loss: DiffValue) -> None:
    """Accumulate d(loss)/d(value) into every reachable ``requires_grad`` value.

    The loss must be scalar. The tape is visited exactly once in reverse
    topological order and released afterwards; a second backward on the same
    loss raises.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._released:
        raise RuntimeError("tape already consumed by a previous backward")

    topo: list[DiffValue] = []
    visited: set[int] = set()
    stack: list[tuple[DiffValue, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in topo:
        node._parents = ()
        node._backward = None
        node._released = True
