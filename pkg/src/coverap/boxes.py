"""Oriented 3-D boxes shared by the dataset, detector and evaluation code.

Box convention: ``l`` runs along the local heading axis, ``w`` across it and
``h`` along +z. ``theta`` is the yaw of the heading axis measured
counter-clockwise from the sensor +x axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(theta: float) -> float:
    """Map an angle onto [-pi, pi)."""
    return (theta + math.pi) % (2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class BBox7:
    w: float
    h: float
    l: float
    x: float
    y: float
    z: float
    theta: float = 0.0

    def __post_init__(self):
        dims = (self.w, self.h, self.l)
        if not all(math.isfinite(v) for v in dims + (self.x, self.y, self.z, self.theta)):
            raise ValueError(f"non-finite box parameters: {self}")
        if min(dims) <= 0.0:
            raise ValueError(f"box dimensions must be positive, got w={self.w} h={self.h} l={self.l}")
        # frozen dataclass: normalize yaw in place
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @classmethod
    def from_array(cls, arr) -> "BBox7":
        return cls(*(float(v) for v in np.asarray(arr, dtype=float).reshape(7)))

    def to_array(self) -> np.ndarray:
        return np.array([self.w, self.h, self.l, self.x, self.y, self.z, self.theta])

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def volume(self) -> float:
        return self.w * self.h * self.l

    def footprint(self) -> np.ndarray:
        """Counter-clockwise (4, 2) corners of the yawed footprint."""
        hl, hw = self.l / 2.0, self.w / 2.0
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])

    def corners(self) -> np.ndarray:
        """(8, 3) corners, bottom face first."""
        fp = self.footprint()
        zlo, zhi = self.z - self.h / 2.0, self.z + self.h / 2.0
        return np.vstack([np.column_stack([fp, np.full(4, zlo)]),
                          np.column_stack([fp, np.full(4, zhi)])])

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of which (N, 3) points lie inside the box."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        d = p[:, :3] - self.center
        c, s = math.cos(self.theta), math.sin(self.theta)
        u = d[:, 0] * c + d[:, 1] * s
        v = -d[:, 0] * s + d[:, 1] * c
        return ((np.abs(u) <= self.l / 2.0) & (np.abs(v) <= self.w / 2.0)
                & (np.abs(d[:, 2]) <= self.h / 2.0))

    def transformed(self, translation, yaw: float = 0.0) -> "BBox7":
        """Apply the rigid motion ``p -> R(yaw) p + translation`` to the box."""
        t = np.asarray(translation, dtype=float)
        c, s = math.cos(yaw), math.sin(yaw)
        x = c * self.x - s * self.y + t[0]
        y = s * self.x + c * self.y + t[1]
        return BBox7(self.w, self.h, self.l, x, y, self.z + t[2], self.theta + yaw)
