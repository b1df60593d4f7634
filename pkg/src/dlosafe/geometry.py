"""Oriented-box geometry shared by the simulator, the predictor's
contact handler, and the planner's collision checks."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["OrientedBox", "rot_z", "box_signed_distance", "box_project_out",
           "obb_separation_margin", "OBB_EPS"]

OBB_EPS = 1e-10


def rot_z(yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class OrientedBox:
    """Box with arbitrary center, yaw about world z, and half-extents."""

    center: np.ndarray
    yaw: float
    half: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "half", np.asarray(self.half, dtype=float))
        if np.any(self.half <= 0):
            raise ValueError("half-extents must be positive")
        object.__setattr__(self, "_R", rot_z(self.yaw))

    @property
    def R(self):
        return self._R

    def to_local(self, p):
        return (np.asarray(p, dtype=float) - self.center) @ self.R

    def to_world(self, pl):
        return self.center + np.asarray(pl, dtype=float) @ self.R.T


def box_signed_distance(p, box):
    """Exact signed distance to an oriented box; works on (..., 3) arrays."""
    pl = box.to_local(p)
    q = np.abs(pl) - box.half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return outside + inside


def box_project_out(p, box):
    """Nearest surface point when p is inside the box, else p unchanged.

    For a single interior point this is the exact minimizer of the
    displacement QP min ||x - p||^2 s.t. x outside the box.
    """
    p = np.asarray(p, dtype=float)
    pl = box.to_local(p)
    q = np.abs(pl) - box.half
    if np.max(q) >= 0.0:
        return p
    ax = int(np.argmax(q))
    out = pl.copy()
    sign = 1.0 if pl[ax] >= 0.0 else -1.0
    out[ax] = sign * box.half[ax]
    return box.to_world(out)


def _axis_gap(axis, dc, R1, h1, R2, h2, extra1):
    n = np.linalg.norm(axis)
    if n < OBB_EPS:
        return None
    a = axis / n
    r1 = np.abs(a @ R1) @ h1 + np.abs(a) @ extra1
    r2 = np.abs(a @ R2) @ h2
    return abs(a @ dc) - r1 - r2


def obb_separation_margin(c1, R1, h1, c2, R2, h2, extra1=None):
    """Max separating-axis gap over the 15 SAT axes.

    Positive means provably separated; for boxes the test is exact, so a
    nonpositive margin with extra1 == 0 means the boxes intersect.
    extra1 inflates box 1 by an axis-aligned margin (componentwise).
    """
    extra1 = np.zeros(3) if extra1 is None else np.asarray(extra1, dtype=float)
    dc = np.asarray(c2, dtype=float) - np.asarray(c1, dtype=float)
    best = -np.inf
    for i in range(3):
        g = _axis_gap(R1[:, i], dc, R1, h1, R2, h2, extra1)
        if g is not None:
            best = max(best, g)
        g = _axis_gap(R2[:, i], dc, R1, h1, R2, h2, extra1)
        if g is not None:
            best = max(best, g)
    for i in range(3):
        for j in range(3):
            g = _axis_gap(np.cross(R1[:, i], R2[:, j]), dc, R1, h1, R2, h2, extra1)
            if g is not None:
                best = max(best, g)
    return best
