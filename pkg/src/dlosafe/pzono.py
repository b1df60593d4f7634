"""Polynomial zonotope algebra for parameterized reachable sets.

A polynomial zonotope is the set

    { c + sum_i g_i * prod_j a_j^{E[i,j]} + sum_l h_l * e_l
      : a in [-1,1]^p, e in [-1,1]^m }

where the ``a_j`` are *named* dependent factors (so sets built from the
same trajectory parameter stay correlated across operations) and the
``h_l`` are independent error generators.  Everything here is plain
numpy with value semantics: operations return new objects and never
mutate their inputs.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

__all__ = [
    "IntervalVector",
    "PolyZonotope",
    "pz_from_interval",
    "sin_pz",
    "cos_pz",
    "pz_stack",
    "fresh_ids",
]

_FRESH_COUNTER = itertools.count()


def fresh_ids(n, prefix="b"):
    """Generate n factor names guaranteed unique within this process."""
    return tuple(f"{prefix}{next(_FRESH_COUNTER)}" for _ in range(n))


class IntervalVector:
    """Axis-aligned box [lo, hi], the enclosure currency of the planner."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError(f"interval bounds shape mismatch: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise ValueError("interval lower bound exceeds upper bound")
        self.lo = lo
        self.hi = hi

    @classmethod
    def point(cls, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x, x.copy())

    @property
    def dim(self):
        return self.lo.shape[0]

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    @property
    def radius(self):
        return 0.5 * (self.hi - self.lo)

    @property
    def width(self):
        return self.hi - self.lo

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def contains_interval(self, other, tol=0.0):
        return bool(np.all(other.lo >= self.lo - tol) and np.all(other.hi <= self.hi + tol))

    def hull(self, other):
        return IntervalVector(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def widen(self, margin):
        m = np.broadcast_to(np.asarray(margin, dtype=float), self.lo.shape)
        return IntervalVector(self.lo - m, self.hi + m)

    def sup_norm2(self):
        """Largest Euclidean norm attained over the box (exact)."""
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def __add__(self, other):
        if isinstance(other, IntervalVector):
            return IntervalVector(self.lo + other.lo, self.hi + other.hi)
        other = np.asarray(other, dtype=float)
        return IntervalVector(self.lo + other, self.hi + other)

    __radd__ = __add__

    def __repr__(self):
        return f"IntervalVector(lo={self.lo!r}, hi={self.hi!r})"


def _compress(c, G, E, H):
    """Drop zero generators, merge duplicate exponent rows, fold constants."""
    if G.shape[1]:
        # constant monomials (all-zero exponent rows) belong in the center
        const = ~np.any(E, axis=1)
        if np.any(const):
            c = c + G[:, const].sum(axis=1)
            G = G[:, ~const]
            E = E[~const]
    if G.shape[1]:
        uniq, inv = np.unique(E, axis=0, return_inverse=True)
        if uniq.shape[0] < E.shape[0]:
            Gm = np.zeros((G.shape[0], uniq.shape[0]))
            np.add.at(Gm.T, inv.ravel(), G.T)
            G, E = Gm, uniq
        nz = np.any(G != 0.0, axis=0)
        G, E = G[:, nz], E[nz]
    if H.shape[1]:
        H = H[:, np.any(H != 0.0, axis=0)]
    return c, G, E, H


def _drop_unused_factors(E, ids):
    if E.shape[0] == 0:
        return np.zeros((0, 0), dtype=np.int64), ()
    used = np.any(E != 0, axis=0)
    return E[:, used], tuple(i for i, u in zip(ids, used) if u)


class PolyZonotope:
    """Named-factor polynomial zonotope (see module docstring)."""

    __slots__ = ("c", "G", "E", "ids", "H")

    def __init__(self, c, G=None, E=None, ids=(), H=None, compress=True):
        c = np.atleast_1d(np.asarray(c, dtype=float))
        d = c.shape[0]
        G = np.zeros((d, 0)) if G is None else np.asarray(G, dtype=float).reshape(d, -1)
        H = np.zeros((d, 0)) if H is None else np.asarray(H, dtype=float).reshape(d, -1)
        ids = tuple(ids)
        E = np.zeros((0, len(ids)), dtype=np.int64) if E is None else np.asarray(E, dtype=np.int64)
        E = E.reshape(G.shape[1], len(ids))
        if np.any(E < 0):
            raise ValueError("exponents must be nonnegative")
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate factor ids: {ids}")
        if compress:
            c, G, E, H = _compress(c, G, E, H)
            E, ids = _drop_unused_factors(E, ids)
        self.c, self.G, self.E, self.ids, self.H = c, G, E, ids, H

    # -- constructors -------------------------------------------------

    @classmethod
    def point(cls, x):
        return cls(np.asarray(x, dtype=float))

    @classmethod
    def scalar(cls, v):
        return cls(np.array([float(v)]))

    # -- basic queries -------------------------------------------------

    @property
    def dim(self):
        return self.c.shape[0]

    @property
    def n_dep(self):
        return self.G.shape[1]

    @property
    def n_err(self):
        return self.H.shape[1]

    def has_factor(self, fid):
        return fid in self.ids

    def __repr__(self):
        return (f"PolyZonotope(dim={self.dim}, n_dep={self.n_dep}, "
                f"n_err={self.n_err}, ids={self.ids})")

    # -- evaluation (audit / test oracle path) -------------------------

    def evaluate(self, assignment, err=None):
        """Evaluate at a concrete factor assignment (dict id -> value in [-1,1])."""
        x = self.c.copy()
        if self.n_dep:
            vals = np.array([assignment[i] for i in self.ids], dtype=float)
            mono = np.prod(vals[None, :] ** self.E, axis=1)
            x = x + self.G @ mono
        if self.n_err and err is not None:
            x = x + self.H @ np.asarray(err, dtype=float)
        return x

    def evaluate_batch(self, assignment, err=None, chunk=20_000):
        """Vectorized evaluate: assignment maps id -> (n,) array of values."""
        n = len(next(iter(assignment.values()))) if assignment else 1
        out = np.tile(self.c, (n, 1))
        if self.n_dep:
            A = np.column_stack([np.asarray(assignment[i], dtype=float) for i in self.ids])
            for s in range(0, n, chunk):
                Ab = A[s:s + chunk]
                mono = np.ones((Ab.shape[0], self.n_dep))
                for j in range(len(self.ids)):
                    nzexp = self.E[:, j] != 0
                    if np.any(nzexp):
                        mono[:, nzexp] *= Ab[:, j][:, None] ** self.E[None, nzexp, j]
                out[s:s + chunk] += mono @ self.G.T
        if self.n_err and err is not None:
            out += np.asarray(err, dtype=float) @ self.H.T
        return out

    # -- factor bookkeeping --------------------------------------------

    def _merged_ids(self, other):
        ids = list(self.ids)
        for i in other.ids:
            if i not in ids:
                ids.append(i)
        ids = tuple(ids)

        def expand(E, own):
            out = np.zeros((E.shape[0], len(ids)), dtype=np.int64)
            for j, fid in enumerate(own):
                out[:, ids.index(fid)] = E[:, j]
            return out

        return ids, expand(self.E, self.ids), expand(other.E, other.ids)

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        if isinstance(other, (int, float)):
            return PolyZonotope(self.c + other, self.G, self.E, self.ids, self.H, compress=False)
        if isinstance(other, np.ndarray):
            return PolyZonotope(self.c + other, self.G, self.E, self.ids, self.H, compress=False)
        if not isinstance(other, PolyZonotope):
            return NotImplemented
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
        ids, Ea, Eb = self._merged_ids(other)
        return PolyZonotope(
            self.c + other.c,
            np.hstack([self.G, other.G]),
            np.vstack([Ea, Eb]),
            ids,
            np.hstack([self.H, other.H]),
        )

    __radd__ = __add__

    def __neg__(self):
        return PolyZonotope(-self.c, -self.G, self.E, self.ids, self.H, compress=False)

    def __sub__(self, other):
        if isinstance(other, PolyZonotope):
            return self + (-other)
        return self + (-np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            s = float(other)
            return PolyZonotope(self.c * s, self.G * s, self.E, self.ids, self.H, compress=False)
        if not isinstance(other, PolyZonotope):
            return NotImplemented
        return _pz_mul(self, other)

    __rmul__ = __mul__

    def linear_map(self, A):
        """Exact image under a fixed matrix A (rows x dim)."""
        A = np.asarray(A, dtype=float)
        return PolyZonotope(A @ self.c, A @ self.G, self.E, self.ids, A @ self.H)

    # -- structural ops --------------------------------------------------

    def slice(self, fid, value):
        """Substitute a concrete value in [-1,1] for one named factor."""
        if abs(value) > 1.0 + 1e-12:
            raise ValueError(f"slice value {value} outside [-1,1]")
        if fid not in self.ids:
            return self
        j = self.ids.index(fid)
        mult = float(value) ** self.E[:, j]
        G = self.G * mult[None, :]
        E = np.delete(self.E, j, axis=1)
        ids = self.ids[:j] + self.ids[j + 1:]
        return PolyZonotope(self.c.copy(), G, E, ids, self.H)

    def restrict(self, fid, center, half_width):
        """Reparameterize one factor to the subrange center +- half_width.

        Substitutes a -> center + half_width * a', so the result sliced over
        a' in [-1,1] sweeps exactly the sub-cell of the original factor.
        """
        if abs(center) + abs(half_width) > 1.0 + 1e-12:
            raise ValueError("restricted cell leaves [-1,1]")
        if fid not in self.ids:
            return self
        j = self.ids.index(fid)
        max_e = int(self.E[:, j].max()) if self.n_dep else 0
        # binomial expansion (center + hw*a')^e for each needed power
        coeffs = {0: {0: 1.0}}
        for e in range(1, max_e + 1):
            coeffs[e] = {
                k: math.comb(e, k) * (center ** (e - k)) * (half_width ** k)
                for k in range(e + 1)
            }
        cols, exps = [], []
        for i in range(self.n_dep):
            e = int(self.E[i, j])
            for k, w in coeffs[e].items():
                row = self.E[i].copy()
                row[j] = k
                cols.append(self.G[:, i] * w)
                exps.append(row)
        G = np.array(cols).T if cols else np.zeros((self.dim, 0))
        E = np.array(exps, dtype=np.int64) if exps else np.zeros((0, len(self.ids)), dtype=np.int64)
        return PolyZonotope(self.c.copy(), G, E, self.ids, self.H)

    def enclosure(self):
        """Exponent-aware interval enclosure (even powers range over [0,1])."""
        lo = self.c.copy()
        hi = self.c.copy()
        if self.n_dep:
            all_even = ~np.any(self.E % 2, axis=1)
            some = np.any(self.E != 0, axis=1)
            even = all_even & some
            mixed = ~even
            if np.any(even):
                Ge = self.G[:, even]
                lo = lo + np.minimum(Ge, 0.0).sum(axis=1)
                hi = hi + np.maximum(Ge, 0.0).sum(axis=1)
            if np.any(mixed):
                r = np.abs(self.G[:, mixed]).sum(axis=1)
                lo, hi = lo - r, hi + r
        if self.n_err:
            r = np.abs(self.H).sum(axis=1)
            lo, hi = lo - r, hi + r
        return IntervalVector(lo, hi)

    def reduce(self, max_gens, max_err_gens=None):
        """Fold the smallest dependent generators into error generators.

        Containment-preserving: every folded generator's monomial ranges
        inside [-1,1] (or [0,1] for all-even exponents, which shift the
        center by half before folding).
        """
        if max_gens < 1:
            raise ValueError("max_gens must be >= 1")
        out = self
        if out.n_dep > max_gens:
            mag = np.abs(out.G).max(axis=0)
            order = np.argsort(mag, kind="stable")[::-1]
            keep, fold = order[:max_gens], order[max_gens:]
            c = out.c.copy()
            new_err = []
            all_even = ~np.any(out.E % 2, axis=1)
            for i in fold:
                g = out.G[:, i]
                if all_even[i]:
                    c = c + 0.5 * g
                    new_err.append(0.5 * g)
                else:
                    new_err.append(g)
            H = np.hstack([out.H] + [e[:, None] for e in new_err]) if new_err else out.H
            E, ids = _drop_unused_factors(out.E[np.sort(keep)], out.ids)
            out = PolyZonotope(c, out.G[:, np.sort(keep)], E, ids, H)
        if max_err_gens is not None and out.n_err > max_err_gens:
            d = out.dim
            budget = max(max_err_gens - d, 0)
            mag = np.abs(out.H).max(axis=0)
            order = np.argsort(mag, kind="stable")[::-1]
            keep, fold = order[:budget], order[budget:]
            box = np.diag(np.abs(out.H[:, fold]).sum(axis=1))
            box = box[:, np.any(box != 0.0, axis=0)]
            H = np.hstack([out.H[:, np.sort(keep)], box])
            out = PolyZonotope(out.c, out.G, out.E, out.ids, H, compress=False)
        return out


def _pz_mul(a, b):
    """Elementwise product; scalar operands broadcast against vectors."""
    if a.dim != b.dim and a.dim != 1 and b.dim != 1:
        raise ValueError(f"dimension mismatch in product: {a.dim} vs {b.dim}")

    ids, Ea, Eb = a._merged_ids(b)
    p = len(ids)

    def bc(x, d):  # broadcast a 1-dim PZ part against dimension d
        return x if x.shape[0] == d else np.repeat(x, d, axis=0)

    d = max(a.dim, b.dim)
    ca, Ga, Ha = bc(a.c.reshape(-1, 1), d)[:, 0], bc(a.G, d), bc(a.H, d)
    cb, Gb, Hb = bc(b.c.reshape(-1, 1), d)[:, 0], bc(b.G, d), bc(b.H, d)

    c = ca * cb
    G_parts, E_parts = [], []
    if Ga.shape[1]:
        G_parts.append(Ga * cb[:, None])
        E_parts.append(Ea)
    if Gb.shape[1]:
        G_parts.append(Gb * ca[:, None])
        E_parts.append(Eb)
    if Ga.shape[1] and Gb.shape[1]:
        # all cross terms: generator i of a with generator j of b
        na, nb = Ga.shape[1], Gb.shape[1]
        G_parts.append((Ga[:, :, None] * Gb[:, None, :]).reshape(d, na * nb))
        E_parts.append((Ea[:, None, :] + Eb[None, :, :]).reshape(na * nb, p))
    G = np.hstack(G_parts) if G_parts else np.zeros((d, 0))
    E = np.vstack(E_parts) if E_parts else np.zeros((0, p), dtype=np.int64)

    # every product touching an error factor becomes a new error generator;
    # the involved monomials all range inside [-1,1], so magnitude is enough
    H_parts = []
    if Ha.shape[1]:
        H_parts.append(Ha * cb[:, None])
        if Gb.shape[1]:
            H_parts.append((Ha[:, :, None] * Gb[:, None, :]).reshape(d, -1))
        if Hb.shape[1]:
            H_parts.append((Ha[:, :, None] * Hb[:, None, :]).reshape(d, -1))
    if Hb.shape[1]:
        H_parts.append(Hb * ca[:, None])
        if Ga.shape[1]:
            H_parts.append((Hb[:, :, None] * Ga[:, None, :]).reshape(d, -1))
    H = np.hstack(H_parts) if H_parts else np.zeros((d, 0))
    return PolyZonotope(c, G, E, ids, H)


def pz_from_interval(iv, ids=None):
    """Exact PZ of a box: one linear factor per nondegenerate dimension."""
    c = iv.center
    r = iv.radius
    nz = np.nonzero(r > 0.0)[0]
    if ids is None:
        ids = fresh_ids(len(nz))
    elif len(ids) != len(nz):
        raise ValueError(f"need {len(nz)} factor ids, got {len(ids)}")
    G = np.zeros((iv.dim, len(nz)))
    for k, i in enumerate(nz):
        G[i, k] = r[i]
    E = np.eye(len(nz), dtype=np.int64)
    return PolyZonotope(c, G, E, tuple(ids))


def pz_stack(pzs):
    """Concatenate PZs into one higher-dimensional PZ, merging factors."""
    ids = []
    for p in pzs:
        for i in p.ids:
            if i not in ids:
                ids.append(i)
    ids = tuple(ids)
    d = sum(p.dim for p in pzs)
    c = np.concatenate([p.c for p in pzs])
    G_cols, E_rows, H_cols = [], [], []
    row = 0
    for p in pzs:
        for j in range(p.n_dep):
            col = np.zeros(d)
            col[row:row + p.dim] = p.G[:, j]
            G_cols.append(col)
            e = np.zeros(len(ids), dtype=np.int64)
            for k, fid in enumerate(p.ids):
                e[ids.index(fid)] = p.E[j, k]
            E_rows.append(e)
        for j in range(p.n_err):
            col = np.zeros(d)
            col[row:row + p.dim] = p.H[:, j]
            H_cols.append(col)
        row += p.dim
    G = np.array(G_cols).T if G_cols else np.zeros((d, 0))
    E = np.array(E_rows, dtype=np.int64) if E_rows else np.zeros((0, len(ids)), dtype=np.int64)
    H = np.array(H_cols).T if H_cols else np.zeros((d, 0))
    return PolyZonotope(c, G, E, ids, H)


_FACTORIALS = [math.factorial(n) for n in range(16)]


def _taylor_trig(a, degree, derivs, max_gens):
    """Shared Taylor-with-remainder expansion for sin/cos enclosures.

    Intermediate powers are order-reduced once they outgrow max_gens;
    reduction only widens the set, so the enclosure stays sound.
    """
    if a.dim != 1:
        raise ValueError("trig enclosure expects a scalar PZ")
    if not 1 <= degree <= 14:
        raise ValueError("taylor degree out of supported range")
    c0 = float(a.c[0])
    delta = a - c0
    enc = delta.enclosure()
    r = float(max(abs(enc.lo[0]), abs(enc.hi[0])))

    out = PolyZonotope.scalar(derivs[0])
    power = delta
    for n in range(1, degree + 1):
        coef = derivs[n % 4] / _FACTORIALS[n]
        if coef != 0.0:
            out = out + power * coef
        if n < degree:
            power = _pz_mul(power, delta)
            if power.n_dep > max_gens or power.n_err > max_gens:
                power = power.reduce(max_gens, max_err_gens=max_gens)
    remainder = r ** (degree + 1) / _FACTORIALS[degree + 1]
    if remainder > 0.0:
        H = np.hstack([out.H, np.array([[remainder]])])
        out = PolyZonotope(out.c, out.G, out.E, out.ids, H, compress=False)
    if out.n_err > 4 * max_gens:
        out = out.reduce(max(out.n_dep, 1), max_err_gens=4 * max_gens)
    return out


def sin_pz(a, degree=5, max_gens=40):
    """Sound enclosure of sin over a scalar PZ (Taylor + Lagrange remainder)."""
    if a.dim != 1:
        raise ValueError("sin_pz expects a scalar PZ")
    c0 = float(a.c[0])
    derivs = (math.sin(c0), math.cos(c0), -math.sin(c0), -math.cos(c0))
    return _taylor_trig(a, degree, derivs, max_gens)


def cos_pz(a, degree=5, max_gens=40):
    """Sound enclosure of cos over a scalar PZ (Taylor + Lagrange remainder)."""
    if a.dim != 1:
        raise ValueError("cos_pz expects a scalar PZ")
    c0 = float(a.c[0])
    derivs = (math.cos(c0), -math.sin(c0), -math.cos(c0), math.sin(c0))
    return _taylor_trig(a, degree, derivs, max_gens)
