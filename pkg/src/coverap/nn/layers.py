"""Parameterized layers built on the tensor ops."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator, Optional, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Holds named parameters and child modules; ``training`` toggles dropout."""

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._children: "OrderedDict[str, Module]" = OrderedDict()
        self.training = True

    def param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def child(self, name: str, mod: "Module") -> "Module":
        self._children[name] = mod
        return mod

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        for k, p in self._params.items():
            yield prefix + k, p
        for k, c in self._children.items():
            yield from c.named_parameters(prefix + k + ".")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def n_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for c in self._children.values():
            c.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def requires_grad_(self, flag: bool) -> "Module":
        for p in self.parameters():
            p.requires_grad = flag
        return self

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, p.data.copy()) for k, p in self.named_parameters())

    def load_state_dict(self, state) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise ValueError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in own.items():
            v = np.asarray(state[k])
            if v.shape != p.data.shape:
                raise ValueError(f"{k}: shape {v.shape} != {p.data.shape}")
            p.data = v.astype(p.data.dtype, copy=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        bound = np.sqrt(1.0 / d_in)
        self.d_in, self.d_out = d_in, d_out
        self.weight = self.param("weight", rng.uniform(-bound, bound, (d_in, d_out)).astype(dtype))
        self.bias = self.param("bias", rng.uniform(-bound, bound, d_out).astype(dtype))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.d_in:
            raise ValueError(f"linear expects last dim {self.d_in}, got {x.shape[-1]}")
        return T.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.gamma = self.param("gamma", np.ones(d, dtype=dtype))
        self.beta = self.param("beta", np.zeros(d, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class DenseBlock(Module):
    """Linear -> LayerNorm -> ReLU -> Dropout."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dropout: float = 0.1,
                 dtype=np.float32):
        super().__init__()
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        self.lin = self.child("lin", Linear(d_in, d_out, rng, dtype))
        self.norm = self.child("norm", LayerNorm(d_out, dtype=dtype))
        self.p = dropout
        self.rng: Optional[np.random.Generator] = None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.relu(self.norm(self.lin(x)))
        return T.dropout(y, self.p, self.rng, self.training)


class DenseStack(Module):
    def __init__(self, widths: Sequence[int], rng: np.random.Generator, dropout: float = 0.1,
                 dtype=np.float32):
        super().__init__()
        self.blocks = [self.child(str(i), DenseBlock(a, b, rng, dropout, dtype))
                       for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]

    def set_rng(self, rng: Optional[np.random.Generator]) -> None:
        for b in self.blocks:
            b.rng = rng

    def __call__(self, x: Tensor) -> Tensor:
        for b in self.blocks:
            x = b(x)
        return x


class MLP(Module):
    """Linear layers with ReLU between them, none after the last."""

    def __init__(self, widths: Sequence[int], rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.layers = [self.child(str(i), Linear(a, b, rng, dtype))
                       for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]

    def __call__(self, x: Tensor) -> Tensor:
        for i, lin in enumerate(self.layers):
            x = lin(x)
            if i < len(self.layers) - 1:
                x = T.relu(x)
        return x


class SelfAttention(Module):
    """Single-head scaled dot-product attention over the point axis.

    Input ``[B, N, d]`` with a boolean mask ``[B, N]``; padded keys get zero
    weight. Padded query rows still produce values but are ignored downstream.
    """

    def __init__(self, d: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.d = d
        self.q = self.child("q", Linear(d, d, rng, dtype))
        self.k = self.child("k", Linear(d, d, rng, dtype))
        self.v = self.child("v", Linear(d, d, rng, dtype))

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        squeeze = x.ndim == 2
        if squeeze:
            x = T.reshape(x, (1,) + x.shape)
            mask = None if mask is None else np.asarray(mask)[None]
        q, k, v = self.q(x), self.k(x), self.v(x)
        scores = T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / np.sqrt(self.d))
        key_mask = None if mask is None else np.asarray(mask, dtype=bool)[:, None, :]
        att = T.masked_softmax(scores, key_mask, axis=-1)
        y = T.matmul(att, v)
        if squeeze:
            y = T.reshape(y, y.shape[1:])
        return y


def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over axis -2 restricted to rows where ``mask`` is True."""
    m = np.asarray(mask, dtype=x.dtype)[..., None]
    count = m.sum(axis=-2)
    if np.any(count == 0):
        raise ValueError("masked mean over an empty set")
    return T.div(T.tsum(T.mul(x, m), axis=-2), count)
