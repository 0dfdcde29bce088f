"""Rotated 3-D IoU, threshold-sweep mAP and fused/single ratio tables."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .boxes import BBox7

DEFAULT_THRESHOLDS = tuple(round(0.1 * k, 1) for k in range(1, 10))
AREA_EPS = 1e-12


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _edge_hit(p, q, a, b):
    # intersection of segment p->q with the infinite line a->b
    d1 = _cross(a, b, p)
    d2 = _cross(a, b, q)
    t = d1 / (d1 - d2)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def clip_convex(subject: Sequence, clip: Sequence) -> list:
    """Sutherland-Hodgman clipping of ``subject`` by the convex CCW polygon ``clip``."""
    out = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not out:
            break
        a, b = clip[i], clip[(i + 1) % n]
        inp, out = out, []
        prev = inp[-1]
        prev_in = _cross(a, b, prev) >= 0.0
        for cur in inp:
            cur_in = _cross(a, b, cur) >= 0.0
            if cur_in:
                if not prev_in:
                    out.append(_edge_hit(prev, cur, a, b))
                out.append(cur)
            elif prev_in:
                out.append(_edge_hit(prev, cur, a, b))
            prev, prev_in = cur, cur_in
    return out


def polygon_area(poly: Sequence) -> float:
    if len(poly) < 3:
        return 0.0
    pts = np.asarray(poly, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    return area if area > AREA_EPS else 0.0


def rotated_iou_3d(a: BBox7, b: BBox7) -> float:
    """IoU of two yawed cuboids: clipped footprint area times vertical overlap."""
    if a.volume <= 0.0 or b.volume <= 0.0:
        raise ValueError("degenerate box")
    inter_area = polygon_area(clip_convex(a.footprint(), b.footprint()))
    zo = min(a.z + a.h / 2, b.z + b.h / 2) - max(a.z - a.h / 2, b.z - b.h / 2)
    inter = inter_area * max(zo, 0.0)
    union = a.volume + b.volume - inter
    return float(min(max(inter / union, 0.0), 1.0))


def monte_carlo_iou(a: BBox7, b: BBox7, n: int = 1_000_000, seed: int = 0) -> float:
    """Volume-sampling estimate of the IoU, independent of the clipping path.

    Samples uniformly inside ``a`` and counts hits inside ``b``.
    """
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.array([a.l, a.w, a.h])
    c, s = np.cos(a.theta), np.sin(a.theta)
    pts = np.column_stack([c * u[:, 0] - s * u[:, 1] + a.x,
                           s * u[:, 0] + c * u[:, 1] + a.y,
                           u[:, 2] + a.z])
    inter = a.volume * b.contains(pts).mean()
    return float(inter / (a.volume + b.volume - inter))


def parse_thresholds(spec: str) -> tuple:
    """Parse ``start:stop:step`` (inclusive) or a comma list into thresholds."""
    if ":" in spec:
        start, stop, step = (float(v) for v in spec.split(":"))
        count = int(round((stop - start) / step)) + 1
        return tuple(round(start + k * step, 6) for k in range(count))
    return tuple(float(v) for v in spec.split(","))


@dataclass
class EvalReport:
    thresholds: tuple
    maps: dict = field(default_factory=dict)
    ious: dict = field(default_factory=dict)

    def add(self, name: str, ious: Sequence[float]) -> None:
        ious = np.asarray(ious, dtype=float)
        self.ious[name] = ious
        self.maps[name] = map_from_ious(ious, self.thresholds)

    def merged(self, other: "EvalReport") -> "EvalReport":
        if tuple(other.thresholds) != tuple(self.thresholds):
            raise ValueError("threshold sets differ")
        out = EvalReport(self.thresholds, dict(self.maps), dict(self.ious))
        out.maps.update(other.maps)
        out.ious.update(other.ious)
        return out

    def map_at(self, name: str, threshold: float) -> float:
        idx = int(np.argmin(np.abs(np.asarray(self.thresholds) - threshold)))
        if abs(self.thresholds[idx] - threshold) > 1e-9:
            raise KeyError(f"threshold {threshold} not in report")
        return float(self.maps[name][idx])

    def to_json(self) -> str:
        return json.dumps({
            "thresholds": list(self.thresholds),
            "maps": {k: [float(v) for v in m] for k, m in self.maps.items()},
            "ious": {k: [float(v) for v in m] for k, m in self.ious.items()},
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        rep = cls(tuple(raw["thresholds"]))
        for k, v in raw["maps"].items():
            rep.maps[k] = np.asarray(v, dtype=float)
        for k, v in raw.get("ious", {}).items():
            rep.ious[k] = np.asarray(v, dtype=float)
        return rep

    def to_csv(self, ratios: Mapping[str, Sequence] | None = None, digits: int = 4) -> str:
        """Table layout: one row per threshold, highest threshold first."""
        ratios = dict(ratios or {})
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iou", *self.maps.keys(), *ratios.keys()])
        order = np.argsort(self.thresholds)[::-1]
        for i in order:
            row = [f"{self.thresholds[i]:.1f}"]
            row += [f"{self.maps[k][i]:.{digits}f}" for k in self.maps]
            for r in ratios.values():
                row.append("undefined" if r[i] is None else f"{r[i]:.{digits}f}")
            writer.writerow(row)
        return buf.getvalue()


def map_from_ious(ious: Sequence[float], thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Per-frame hit rate at each threshold (one target and one prediction per frame)."""
    ious = np.asarray(ious, dtype=float)
    if ious.size == 0:
        raise ValueError("no frames to evaluate")
    return np.array([np.count_nonzero(ious >= t) / ious.size for t in thresholds])


def map_at_thresholds(preds, gts: Sequence[BBox7], thresholds=DEFAULT_THRESHOLDS,
                      name: str = "model") -> EvalReport:
    """Score index-aligned predictions against ground-truth boxes.

    ``preds`` may hold :class:`BBox7` objects or anything exposing ``.bbox``.
    """
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions for {len(gts)} ground-truth boxes")
    ious = [rotated_iou_3d(getattr(p, "bbox", p), g) for p, g in zip(preds, gts)]
    report = EvalReport(tuple(thresholds))
    report.add(name, ious)
    return report


def report_ratios(fused: EvalReport, single: EvalReport, fused_name: str | None = None,
                  single_name: str | None = None) -> list:
    """Element-wise fused/single mAP ratio; ``None`` where the single mAP is zero."""
    if tuple(fused.thresholds) != tuple(single.thresholds):
        raise ValueError("threshold sets differ")
    f = fused.maps[fused_name or next(iter(fused.maps))]
    s = single.maps[single_name or next(iter(single.maps))]
    return [None if sv == 0 else float(fv / sv) for fv, sv in zip(f, s)]
