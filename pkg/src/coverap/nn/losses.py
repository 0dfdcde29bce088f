"""Composite detection loss: SmoothL1 box regression, BCE confidence, axis-aligned IoU."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

LOGIT_CLAMP = 16.0


@dataclass(frozen=True)
class LossWeights:
    w_reg: float = 1.0
    w_conf: float = 0.5
    w_iou: float = 1.0

    def __post_init__(self):
        vals = (self.w_reg, self.w_conf, self.w_iou)
        if any(v < 0 or not np.isfinite(v) for v in vals):
            raise ValueError("loss weights must be finite and nonnegative")
        if not any(vals):
            raise ValueError("loss weights cannot all be zero")


def smooth_l1_loss(pred: Tensor, target, beta: float = 1.0, angle_col: int | None = 6) -> Tensor:
    """Mean over rows of the summed SmoothL1 over columns.

    The yaw column is compared through a wrapped residual so that -pi and pi
    count as the same heading.
    """
    diff = T.sub(pred, target)
    if angle_col is not None:
        cols = np.arange(pred.shape[-1]) == angle_col
        diff = T.where(cols, T.wrap_angle(diff), diff)
    per = T.tsum(T.smooth_l1(diff, beta), axis=-1)
    return T.tmean(per)


def bce_with_logits(logit: Tensor, label) -> Tensor:
    """Binary cross-entropy on a logit clamped to +-16; mean over rows."""
    z = T.clip(logit, -LOGIT_CLAMP, LOGIT_CLAMP)
    y = np.asarray(label, dtype=z.dtype)
    # max(z,0) - z*y + log(1 + exp(-|z|))
    loss = T.add(T.sub(T.relu(z), T.mul(z, y)), T.softplus(T.mul(T.tabs(z), -1.0)))
    return T.tmean(loss)


def bce_prob(p: float, label: float) -> float:
    p = min(max(p, 1e-12), 1 - 1e-12)
    return float(-(label * np.log(p) + (1 - label) * np.log(1 - p)))


def axis_aligned_iou(pred: Tensor, target) -> Tensor:
    """Differentiable IoU of boxes ``(w,h,l,x,y,z,theta)`` with yaw frozen.

    Both boxes are reduced to the axis-aligned hull they would have at the
    target's yaw (held constant), so the term scores centre and size while the
    yaw itself is left to the regression term. Returns per-row IoU.
    """
    tgt = np.asarray(target, dtype=pred.dtype)
    if np.any(tgt[..., :3] <= 0):
        raise ValueError("degenerate target box")
    c = np.abs(np.cos(tgt[..., 6]))
    s = np.abs(np.sin(tgt[..., 6]))
    w_p, h_p, l_p = pred[..., 0], pred[..., 1], pred[..., 2]
    w_t, h_t, l_t = tgt[..., 0], tgt[..., 1], tgt[..., 2]
    ext_p = (T.add(T.mul(l_p, c), T.mul(w_p, s)), T.add(T.mul(l_p, s), T.mul(w_p, c)), h_p)
    ext_t = (l_t * c + w_t * s, l_t * s + w_t * c, h_t)
    inter = None
    for axis in range(3):
        c_p, half_p = pred[..., 3 + axis], T.mul(ext_p[axis], 0.5)
        c_t, half_t = tgt[..., 3 + axis], 0.5 * ext_t[axis]
        hi = T.minimum(T.add(c_p, half_p), c_t + half_t)
        lo = T.maximum(T.sub(c_p, half_p), c_t - half_t)
        ov = T.relu(T.sub(hi, lo))
        inter = ov if inter is None else T.mul(inter, ov)
    vol_p = T.mul(T.mul(ext_p[0], ext_p[1]), ext_p[2])
    vol_t = ext_t[0] * ext_t[1] * ext_t[2]
    union = T.sub(T.add(vol_p, vol_t), inter)
    return T.div(inter, union)


def composite_loss(box: Tensor, logit: Tensor, target_box, label,
                   weights: LossWeights = LossWeights(), reg_pred: Tensor | None = None,
                   reg_target=None) -> tuple:
    """Weighted sum of the three terms; returns ``(loss, parts)``.

    ``box`` holds decoded boxes ``[B,7]`` in metres and radians. When
    ``reg_pred``/``reg_target`` are given the SmoothL1 term is computed on
    them (standardized coordinates) instead of the raw boxes.
    """
    target_box = np.asarray(target_box, dtype=box.dtype)
    if reg_pred is None:
        reg = smooth_l1_loss(box, target_box)
    else:
        reg = smooth_l1_loss(reg_pred, np.asarray(reg_target, dtype=box.dtype))
    conf = bce_with_logits(logit, label)
    iou = T.tmean(axis_aligned_iou(box, target_box))
    total = T.add(T.add(T.mul(reg, weights.w_reg), T.mul(conf, weights.w_conf)),
                  T.mul(T.sub(1.0, iou), weights.w_iou))
    parts = {"reg": float(reg.data), "conf": float(conf.data), "iou": float(iou.data)}
    return total, parts
