"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import NonFiniteError, Tensor


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5, max_coords: int | None = None,
               seed: int = 0) -> float:
    """Max relative error between the taped gradient of scalar ``f`` and central differences.

    Error per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``. ``max_coords``
    samples a random subset of coordinates for large inputs.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    xt = Tensor(x0.copy(), requires_grad=True)
    out = f(xt)
    if out.data.size != 1:
        raise ValueError("f must return a scalar")
    out.backward()
    analytic = np.zeros_like(x0) if xt.grad is None else xt.grad

    idx = np.arange(x0.size)
    if max_coords is not None and x0.size > max_coords:
        idx = np.random.default_rng(seed).choice(x0.size, max_coords, replace=False)
    worst = 0.0
    flat = x0.reshape(-1)
    for i in idx:
        vals = []
        for step in (h, -h):
            xp = flat.copy()
            xp[i] += step
            y = float(f(Tensor(xp.reshape(x0.shape))).data)
            if not np.isfinite(y):
                raise NonFiniteError(f"non-finite evaluation at coordinate {i}")
            vals.append(y)
        num = (vals[0] - vals[1]) / (2 * h)
        a = float(analytic.reshape(-1)[i])
        err = abs(a - num) / max(abs(a), abs(num), 1e-8)
        worst = max(worst, err)
    return worst
