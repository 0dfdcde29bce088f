"""AdamW with decoupled weight decay and a reduce-on-plateau LR schedule."""

from __future__ import annotations

import math

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import NonFiniteError, Tensor


@dataclass
class TrainConfig:
    epochs: int = 600
    batch_size: int = 8
    learning_rate: float = 5e-4
    weight_decay: float = 1e-3
    plateau_factor: float = 0.5
    plateau_patience: int = 20
    plateau_min_delta: float = 1e-4
    dropout_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 < self.plateau_factor < 1.0 or self.plateau_patience < 1:
            raise ValueError("plateau factor must lie in (0, 1) and patience >= 1")


@dataclass
class AdamWState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    scratch: list = field(default_factory=list, repr=False)


def adamw_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamWState,
               lr: float, weight_decay: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8) -> AdamWState:
    """One in-place AdamW update. Raises before touching anything if a gradient is non-finite."""
    for i, g in enumerate(grads):
        if g is not None and not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for parameter {i}")
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        state.scratch = [np.zeros_like(p.data) for p in params]
    state.step += 1
    b1, b2 = betas
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    step_size = lr / c1
    inv_c2 = 1.0 / math.sqrt(c2)
    for p, g, m, v, tmp in zip(params, grads, state.m, state.v, state.scratch):
        p.data *= (1.0 - lr * weight_decay)
        if g is None:
            continue
        # scratch buffers avoid large temporaries on every step
        np.multiply(g, 1.0 - b1, out=tmp)
        m *= b1
        m += tmp
        np.square(g, out=tmp)
        tmp *= (1.0 - b2)
        v *= b2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp *= inv_c2
        tmp += eps
        np.divide(m, tmp, out=tmp)
        tmp *= step_size
        p.data -= tmp
    return state


@dataclass
class PlateauState:
    lr: float
    factor: float = 0.5
    patience: int = 20
    min_delta: float = 1e-4
    best: float = float("inf")
    bad_epochs: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0 or self.patience < 1:
            raise ValueError("factor must lie in (0, 1) and patience >= 1")


def scheduler_step(state: PlateauState, val_loss: float) -> float:
    """Count epochs without a ``min_delta`` improvement; cut the LR once ``patience`` is reached."""
    if val_loss < state.best - state.min_delta:
        state.best = val_loss
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs >= state.patience:
            state.lr *= state.factor
            state.bad_epochs = 0
    return state.lr
