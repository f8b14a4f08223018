"""Reverse-mode automatic differentiation over dense float64 numpy arrays.

A :class:`Tensor` wraps an ndarray plus, when gradients are enabled, a tuple
of ``(parent, vjp)`` links recording how to push a cotangent back to each
input. ``backward()`` topologically sorts the graph from a scalar root and
accumulates gradients into leaf tensors only, so repeated backward calls add
up exactly like separate passes.

All forward ops live here as module-level functions; each one captures just
the arrays its vector-Jacobian product needs. Broadcasting is supported on
elementwise ops and on the batch dimensions of ``matmul`` by summing the
cotangent back down to the original shape.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

from .errors import NumericError, ShapeError

_GRAD_ENABLED = True
_CHECK_FINITE = False

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

CROSS_ENTROPY_CLAMP = 1e-12


@contextmanager
def no_grad():
    """Disable graph construction inside the block (used for evaluation)."""
    global _GRAD_ENABLED
    saved, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = saved


def set_debug_checks(enabled: bool) -> None:
    """Toggle per-op finiteness assertions (slow; for debugging only)."""
    global _CHECK_FINITE
    _CHECK_FINITE = enabled


class Tensor:
    """Dense float64 array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op: str | None = None
        self._parents: tuple = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``.

        The root must be scalar. Non-leaf gradients are transient per call, so
        calling backward twice without zeroing doubles the leaf gradients.
        """
        if self.data.size != 1:
            raise NumericError(f"backward: root must be scalar, got shape {self.data.shape}")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        flows: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = flows.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad and not node._parents:
                node.grad = g.copy() if node.grad is None else node.grad + g
            for parent, vjp in node._parents:
                pg = vjp(g)
                key = id(parent)
                if key in flows:
                    flows[key] = flows[key] + pg
                else:
                    flows[key] = pg

    # operator sugar; every op also exists as a module function
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag}, op={self.op})"


class Parameter(Tensor):
    """Trainable leaf tensor with a unique dotted name."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, op: str, links) -> Tensor:
    """Build an op output, keeping only the links that can carry gradient."""
    if _CHECK_FINITE and not np.isfinite(data).all():
        raise NumericError(f"{op}: non-finite values in forward output")
    out = Tensor(data)
    out.op = op
    if _GRAD_ENABLED:
        kept = tuple((p, vjp) for p, vjp in links if p.requires_grad)
        if kept:
            out._parents = kept
            out.requires_grad = True
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a cotangent down to ``shape`` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data
    return _result(data, "add", [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ])


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data
    return _result(data, "sub", [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(-g, b.data.shape)),
    ])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    return _result(data, "mul", [
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ])


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _result(a.data * c, "scale", [(a, lambda g: g * c)])


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >= 2-d, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.data.shape} @ {b.data.shape}")
    data = a.data @ b.data

    def vjp_a(g):
        return _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape)

    def vjp_b(g):
        return _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape)

    return _result(data, "matmul", [(a, vjp_a), (b, vjp_b)])


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), "relu", [(a, lambda g: g * mask)])


def gelu(a) -> Tensor:
    """Exact GELU ``x * Phi(x)`` with the Gaussian CDF."""
    a = as_tensor(a)
    cdf = 0.5 * (1.0 + erf(a.data / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
    local = cdf + a.data * pdf
    return _result(a.data * cdf, "gelu", [(a, lambda g: g * local)])


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), "log", [(a, lambda g: g / a.data)])


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return y * (g - (g * y).sum(axis=axis, keepdims=True))

    return _result(y, "softmax", [(a, vjp)])


def layer_norm(x, gain, bias, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift.

    eps sits under the square root only; float64 tolerates the tiny default,
    which keeps the output variance within 1e-8 of one.
    """
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    data = xhat * gain.data + bias.data

    def vjp_x(g):
        gh = g * gain.data
        mean_gh = gh.mean(axis=-1, keepdims=True)
        mean_gh_xhat = (gh * xhat).mean(axis=-1, keepdims=True)
        return inv * (gh - mean_gh - xhat * mean_gh_xhat)

    return _result(data, "layer_norm", [
        (x, vjp_x),
        (gain, lambda g: _unbroadcast(g * xhat, gain.data.shape)),
        (bias, lambda g: _unbroadcast(g, bias.data.shape)),
    ])


def embedding_lookup(table, ids) -> Tensor:
    """Gather rows of ``table`` (any leading index shape); scatter-add on the
    way back. Also serves as the node-embedding row lookup."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ShapeError(f"embedding_lookup: ids must be integers, got {ids.dtype}")
    rows = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        raise ShapeError(
            f"embedding_lookup: id out of range [0, {rows}): min={ids.min()}, max={ids.max()}"
        )

    def vjp(g):
        buf = np.zeros_like(table.data)
        np.add.at(buf, ids, g)
        return buf

    return _result(table.data[ids], "embedding_lookup", [(table, vjp)])


def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.data.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, a.data.shape).copy()

    return _result(data, "sum", [(a, vjp)])


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _axis_tuple(axis, a.data.ndim)
    count = int(np.prod([a.data.shape[i] for i in axes]))
    data = a.data.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return np.broadcast_to(g, a.data.shape) / count

    return _result(data, "mean", [(a, vjp)])


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    axis = axis % tensors[0].data.ndim
    data = np.concatenate([t.data for t in tensors], axis=axis)

    links = []
    offset = 0
    for t in tensors:
        width = t.data.shape[axis]
        sl = [slice(None)] * data.ndim
        sl[axis] = slice(offset, offset + width)
        links.append((t, lambda g, sl=tuple(sl): g[sl]))
        offset += width
    return _result(data, "concat", links)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    data = a.data.reshape(shape)
    return _result(data, "reshape", [(a, lambda g: g.reshape(a.data.shape))])


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inverse = np.argsort(axes)
    return _result(np.transpose(a.data, axes), "transpose",
                   [(a, lambda g: np.transpose(g, inverse))])


def take_index(a, index: int, axis: int) -> Tensor:
    """Select one slice along ``axis`` (the slice axis is removed)."""
    a = as_tensor(a)
    axis = axis % a.data.ndim
    data = np.take(a.data, index, axis=axis)

    def vjp(g):
        buf = np.zeros_like(a.data)
        sl = [slice(None)] * a.data.ndim
        sl[axis] = index
        buf[tuple(sl)] = g
        return buf

    return _result(data, "take_index", [(a, vjp)])


def clamp(a, lo: float, hi: float) -> Tensor:
    """Clip values to [lo, hi]; gradient passes only inside the range."""
    a = as_tensor(a)
    mask = (a.data >= lo) & (a.data <= hi)
    return _result(np.clip(a.data, lo, hi), "clamp", [(a, lambda g: g * mask)])


def dropout(a, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only on the training path."""
    a = as_tensor(a)
    if rate <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate) / (1.0 - rate)
    return _result(a.data * keep, "dropout", [(a, lambda g: g * keep)])


def cross_entropy(probs, labels) -> Tensor:
    """Mean negative log-likelihood of binary labels under predicted probs.

    ``probs`` is either an (N, 2) row-stochastic matrix or an (N,) vector of
    positive-class probabilities. Probabilities are clamped away from {0, 1}
    by 1e-12 before the log, and the clamp zeroes the gradient outside that
    range, exactly like an explicit clip node would.
    """
    probs = as_tensor(probs)
    labels = np.asarray(labels)
    n = labels.shape[0] if labels.ndim else 0
    if n == 0:
        raise NumericError("cross_entropy: empty batch")
    if not np.isin(labels, (0, 1)).all():
        raise NumericError("cross_entropy: labels must be 0 or 1")
    labels = labels.astype(np.intp)
    lo, hi = CROSS_ENTROPY_CLAMP, 1.0 - CROSS_ENTROPY_CLAMP

    if probs.data.ndim == 2:
        if probs.data.shape != (n, 2):
            raise ShapeError(f"cross_entropy: expected ({n}, 2) probs, got {probs.data.shape}")
        picked = probs.data[np.arange(n), labels]
        clamped = np.clip(picked, lo, hi)
        data = -np.log(clamped).mean()

        def vjp(g):
            buf = np.zeros_like(probs.data)
            inside = (picked >= lo) & (picked <= hi)
            buf[np.arange(n), labels] = -float(g) / (n * clamped) * inside
            return buf

    elif probs.data.ndim == 1:
        if probs.data.shape != (n,):
            raise ShapeError(f"cross_entropy: expected ({n},) probs, got {probs.data.shape}")
        clamped = np.clip(probs.data, lo, hi)
        data = -np.mean(labels * np.log(clamped) + (1 - labels) * np.log(1.0 - clamped))

        def vjp(g):
            inside = (probs.data >= lo) & (probs.data <= hi)
            return -float(g) / n * (labels / clamped - (1 - labels) / (1.0 - clamped)) * inside

    else:
        raise ShapeError(f"cross_entropy: probs must be 1-d or 2-d, got {probs.data.shape}")

    return _result(np.asarray(data), "cross_entropy", [(probs, vjp)])


def glorot_uniform(shape, rng: np.random.Generator, fan_in=None, fan_out=None) -> np.ndarray:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) initialization; biases start at 0."""
    if fan_in is None:
        fan_in = shape[0] if len(shape) > 1 else shape[0]
    if fan_out is None:
        fan_out = shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)
