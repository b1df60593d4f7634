"""Univariate polynomial-with-error sets: the fast path for certify.

Once the trajectory parameter is sliced to a point, every certified
quantity is a polynomial in the single time factor plus an error radius.
This mirrors the scalar polynomial-zonotope semantics (value = p(t) +- err
for t in [-1, 1]) with dense coefficient arrays, which is an order of
magnitude faster than the generic named-factor representation.
"""

from __future__ import annotations

import math

import numpy as np

from .pzono import IntervalVector

_FACT = [math.factorial(n) for n in range(16)]


class UPoly:
    __slots__ = ("c", "err")

    def __init__(self, c, err=0.0):
        self.c = np.atleast_1d(np.asarray(c, dtype=float))
        self.err = float(err)

    @classmethod
    def _raw(cls, c, err):
        out = object.__new__(cls)
        out.c = c
        out.err = err
        return out

    @classmethod
    def const(cls, v):
        return cls._raw(np.array([float(v)]), 0.0)

    @classmethod
    def from_pz(cls, pz):
        """Convert a scalar PZ over at most one factor (exact)."""
        if pz.dim != 1:
            raise ValueError("expected a scalar set")
        if len(pz.ids) > 1:
            raise ValueError("expected at most one dependent factor")
        err = float(np.abs(pz.H).sum()) if pz.n_err else 0.0
        if pz.n_dep == 0:
            return cls(np.array([pz.c[0]]), err)
        degs = pz.E[:, 0]
        c = np.zeros(int(degs.max()) + 1)
        c[0] = pz.c[0]
        for g, d in zip(pz.G[0], degs):
            c[int(d)] += g
        return cls(c, err)

    @property
    def radius_bound(self):
        return float(np.abs(self.c[1:]).sum()) + self.err

    def __add__(self, other):
        if isinstance(other, (int, float)):
            c = self.c.copy()
            c[0] += other
            return UPoly._raw(c, self.err)
        a, b = self.c, other.c
        if len(a) < len(b):
            a, b = b, a
        c = a.copy()
        c[: len(b)] += b
        return UPoly._raw(c, self.err + other.err)

    __radd__ = __add__

    def __neg__(self):
        return UPoly._raw(-self.c, self.err)

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            return self + (-other)
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return UPoly._raw(self.c * other, self.err * abs(other))
        c = np.convolve(self.c, other.c)
        b_self = float(np.abs(self.c).sum())
        b_other = float(np.abs(other.c).sum())
        err = self.err * (b_other + other.err) + other.err * b_self
        return UPoly._raw(c, err)

    __rmul__ = __mul__

    def bounds(self):
        lo = hi = self.c[0]
        for d in range(1, len(self.c)):
            v = self.c[d]
            if d % 2 == 0:
                if v < 0.0:
                    lo += v
                else:
                    hi += v
            else:
                lo -= abs(v)
                hi += abs(v)
        return lo - self.err, hi + self.err

    def enclosure(self):
        lo, hi = self.bounds()
        return IntervalVector([lo], [hi])

    def _taylor(self, derivs, degree):
        c0 = self.c[0]
        delta = UPoly(self.c.copy(), self.err)
        delta.c[0] = 0.0
        r = delta.radius_bound
        out = UPoly.const(derivs[0])
        power = delta
        for n in range(1, degree + 1):
            coef = derivs[n % 4] / _FACT[n]
            if coef != 0.0:
                out = out + power * coef
            if n < degree:
                power = power * delta
        out.err += r ** (degree + 1) / _FACT[degree + 1]
        return out

    def sin(self, degree=5):
        c0 = self.c[0]
        return self._taylor((math.sin(c0), math.cos(c0),
                             -math.sin(c0), -math.cos(c0)), degree)

    def cos(self, degree=5):
        c0 = self.c[0]
        return self._taylor((math.cos(c0), -math.sin(c0),
                             -math.cos(c0), math.sin(c0)), degree)


def fk_chain_fast(model, q_polys, trig_degree=5):
    """Univariate twin of robot.fk_chain_pz (time factor only)."""
    n = model.n_q
    p_prev = [UPoly.const(model.base_pos[i]) for i in range(3)]
    R_prev = [[UPoly.const(model.base_R[i, j]) for j in range(3)] for i in range(3)]
    links = []
    for j in range(n):
        off = model.offsets[j]
        p_j = [p_prev[i] + (R_prev[i][0] * off[0] + R_prev[i][1] * off[1]
                            + R_prev[i][2] * off[2]) for i in range(3)]
        s = q_polys[j].sin(trig_degree)
        c = q_polys[j].cos(trig_degree)
        a = model.axes[j]
        A = np.outer(a, a)
        B = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
        C = np.eye(3) - A
        R_loc = [[UPoly.const(A[r, k]) + s * B[r, k] + c * C[r, k]
                  for k in range(3)] for r in range(3)]
        R_j = [[R_prev[r][0] * R_loc[0][k] + R_prev[r][1] * R_loc[1][k]
                + R_prev[r][2] * R_loc[2][k] for k in range(3)] for r in range(3)]
        links.append({"p": p_j, "R": R_j})
        p_prev, R_prev = p_j, R_j
    ee = model.ee_offset
    p_ee = [p_prev[i] + (R_prev[i][0] * ee[0] + R_prev[i][1] * ee[1]
                         + R_prev[i][2] * ee[2]) for i in range(3)]
    return links, p_ee


def box_from_components(comps):
    """IntervalVector hull of per-component scalar sets."""
    lo = np.array([c.bounds()[0] for c in comps])
    hi = np.array([c.bounds()[1] for c in comps])
    return IntervalVector(lo, hi)


def upoly_slice(pz, k_norm):
    """Slice a (t, k_j) trajectory PZ at concrete normalized parameters,
    folding directly into univariate coefficients (exact)."""
    err = float(np.abs(pz.H).sum()) if pz.n_err else 0.0
    if pz.n_dep == 0:
        return UPoly._raw(np.array([pz.c[0]]), err)
    ids = pz.ids
    t_col = ids.index("t") if "t" in ids else None
    k_cols = [(j, int(ids[j][1:])) for j in range(len(ids)) if ids[j] != "t"]
    degs = pz.E[:, t_col] if t_col is not None else np.zeros(pz.n_dep, dtype=int)
    c = np.zeros(int(degs.max()) + 1 if pz.n_dep else 1)
    c[0] = pz.c[0]
    for row in range(pz.n_dep):
        g = pz.G[0, row]
        for col, joint in k_cols:
            e = pz.E[row, col]
            if e:
                g *= k_norm[joint] ** e
        c[int(degs[row])] += g
    return UPoly._raw(c, err)
