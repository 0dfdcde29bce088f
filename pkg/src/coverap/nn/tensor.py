"""Dense tensors with a reverse-mode gradient tape.

Every op evaluates eagerly with numpy and, when any input requires a
gradient, records a closure that pushes the output gradient back to its
inputs. ``Tensor.backward`` walks the recorded graph in reverse topological
order. Non-finite results raise immediately with the op name.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class NonFiniteError(FloatingPointError):
    pass


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str = ""):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.op = "leaf"
        self.name = name

    # -- bookkeeping -----------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        g = _unbroadcast(g, self.data.shape)
        # never in-place: the same array may be handed to several parents
        self.grad = g if self.grad is None else self.grad + g

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=self.data.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)

    def __pow__(self, p: float):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = ""
    out.op = op
    needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = needs
    out._parents = tuple(parents) if needs else ()
    out._backward = backward if needs else None
    return out


def _pair(a, b):
    a = as_tensor(a)
    b = as_tensor(b, dtype=a.dtype)
    return a, b


# -- elementwise -------------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(g)
    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            a._accum(g)
        if b.requires_grad:
            b._accum(-g)
    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            a._accum(g * b.data)
        if b.requires_grad:
            b._accum(g * a.data)
    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            a._accum(g / b.data)
        if b.requires_grad:
            b._accum(-g * a.data / (b.data * b.data))
    return _make(a.data / b.data, (a, b), bw, "div")


def power(a: Tensor, p: float) -> Tensor:
    def bw(g):
        a._accum(g * p * a.data ** (p - 1))
    return _make(a.data ** p, (a,), bw, "pow")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def bw(g):
        a._accum(g * y)
    return _make(y, (a,), bw, "exp")


def log(a: Tensor) -> Tensor:
    def bw(g):
        a._accum(g / a.data)
    return _make(np.log(a.data), (a,), bw, "log")


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)

    def bw(g):
        a._accum(g * 0.5 / y)
    return _make(y, (a,), bw, "sqrt")


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0

    def bw(g):
        a._accum(g * pos)
    return _make(a.data * pos, (a,), bw, "relu")


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def bw(g):
        a._accum(g * y * (1.0 - y))
    return _make(y, (a,), bw, "sigmoid")


def softplus(a: Tensor) -> Tensor:
    x = a.data
    y = np.logaddexp(0.0, x)

    def bw(g):
        a._accum(g * 0.5 * (1.0 + np.tanh(0.5 * x)))
    return _make(y.astype(x.dtype, copy=False), (a,), bw, "softplus")


def tabs(a: Tensor) -> Tensor:
    def bw(g):
        a._accum(g * np.sign(a.data))
    return _make(np.abs(a.data), (a,), bw, "abs")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)

    def bw(g):
        a._accum(g * inside)
    return _make(np.clip(a.data, lo, hi), (a,), bw, "clip")


def maximum(a, b) -> Tensor:
    a, b = _pair(a, b)
    pick_a = a.data >= b.data

    def bw(g):
        if a.requires_grad:
            a._accum(g * pick_a)
        if b.requires_grad:
            b._accum(g * ~pick_a)
    return _make(np.where(pick_a, a.data, b.data), (a, b), bw, "maximum")


def minimum(a, b) -> Tensor:
    a, b = _pair(a, b)
    pick_a = a.data <= b.data

    def bw(g):
        if a.requires_grad:
            a._accum(g * pick_a)
        if b.requires_grad:
            b._accum(g * ~pick_a)
    return _make(np.where(pick_a, a.data, b.data), (a, b), bw, "minimum")


def wrap_angle(a: Tensor) -> Tensor:
    """atan2(sin a, cos a): maps onto [-pi, pi) with unit slope."""
    y = np.mod(a.data + np.pi, 2.0 * np.pi) - np.pi

    def bw(g):
        a._accum(g)
    return _make(y, (a,), bw, "wrap_angle")


def smooth_l1(a: Tensor, beta: float = 1.0) -> Tensor:
    u = a.data
    small = np.abs(u) < beta
    y = np.where(small, 0.5 * u * u / beta, np.abs(u) - 0.5 * beta)

    def bw(g):
        a._accum(g * np.where(small, u / beta, np.sign(u)))
    return _make(y, (a,), bw, "smooth_l1")


# -- reductions and shape ops ----------------------------------------------------
def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accum(np.broadcast_to(g, a.data.shape))
    return _make(np.asarray(y), (a,), bw, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.data.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    def bw(g):
        a._accum(g.reshape(a.data.shape))
    return _make(a.data.reshape(shape), (a,), bw, "reshape")


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    def bw(g):
        a._accum(np.swapaxes(g, i, j))
    return _make(np.swapaxes(a.data, i, j), (a,), bw, "swapaxes")


def getitem(a: Tensor, idx) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        a._accum(full)
    return _make(a.data[idx], (a,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(ts, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accum(piece)
    return _make(np.concatenate([t.data for t in ts], axis=axis), ts, bw, "concat")


def where(cond: np.ndarray, a, b) -> Tensor:
    a, b = _pair(a, b)
    cond = np.asarray(cond, dtype=bool)

    def bw(g):
        if a.requires_grad:
            a._accum(g * cond)
        if b.requires_grad:
            b._accum(g * ~cond)
    return _make(np.where(cond, a.data, b.data), (a, b), bw, "where")


# -- linear algebra and fused layers ------------------------------------------------
def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            if b.data.ndim == 2:
                a._accum(g @ b.data.T)
            else:
                a._accum(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if b.data.ndim == 2 and a.data.ndim > 2:
                a2 = a.data.reshape(-1, a.data.shape[-1])
                b._accum(a2.T @ g.reshape(-1, g.shape[-1]))
            else:
                b._accum(np.swapaxes(a.data, -1, -2) @ g)
    return _make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``."""
    x = as_tensor(x)
    lead = x.data.shape[:-1]
    x2 = x.data.reshape(-1, x.data.shape[-1])
    y = x2 @ w.data
    if b is not None:
        y = y + b.data
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        if x.requires_grad:
            x._accum((g2 @ w.data.T).reshape(x.data.shape))
        if w.requires_grad:
            w._accum(x2.T @ g2)
        if b is not None and b.requires_grad:
            b._accum(g2.sum(axis=0))
    return _make(y.reshape(*lead, w.data.shape[1]), parents, bw, "linear")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data

    def bw(g):
        if gamma.requires_grad:
            gamma._accum((g * xhat).reshape(-1, xd.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            beta._accum(g.reshape(-1, xd.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx = g * gamma.data
            x._accum(inv * (gx - gx.mean(axis=-1, keepdims=True)
                            - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))
    return _make(y, (x, gamma, beta), bw, "layer_norm")


def masked_softmax(x: Tensor, mask: Optional[np.ndarray] = None, axis: int = -1) -> Tensor:
    """Softmax along ``axis``; entries where ``mask`` is False get exactly zero weight."""
    xd = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), xd.shape)
        if not np.all(mask.any(axis=axis)):
            raise ValueError("softmax over a fully masked row")
        xd = np.where(mask, xd, -np.inf)
    m = np.max(xd, axis=axis, keepdims=True)
    e = np.exp(xd - m)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        x._accum(y * (g - (g * y).sum(axis=axis, keepdims=True)))
    return _make(y, (x,), bw, "softmax")


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    if not training or p == 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)

    def bw(g):
        x._accum(g * keep)
    return _make(x.data * keep, (x,), bw, "dropout")


def parameters_finite(params: Iterable[Tensor]) -> bool:
    return all(np.all(np.isfinite(p.data)) for p in params)
