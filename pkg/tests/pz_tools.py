"""Shared helpers for polynomial-zonotope tests: random sets, random
expression trees, and the vectorized pointwise-evaluation oracle used to
check containment of composite expressions."""

import numpy as np

from dlosafe.pzono import PolyZonotope, cos_pz, sin_pz


def random_pz(rng, dim, n_gens=4, n_err=2, ids=None, max_exp=3, scale=1.0):
    if ids is None:
        ids = tuple(f"f{i}" for i in range(rng.integers(1, 4)))
    G = scale * rng.normal(size=(dim, n_gens))
    E = rng.integers(0, max_exp + 1, size=(n_gens, len(ids)))
    # avoid all-zero exponent rows so generators stay dependent
    for r in range(n_gens):
        if not E[r].any():
            E[r, rng.integers(0, len(ids))] = 1
    H = scale * rng.normal(size=(dim, n_err)) if n_err else None
    return PolyZonotope(scale * rng.normal(size=dim), G, E, ids, H)


def sample_assignment(rng, ids):
    return {i: rng.uniform(-1.0, 1.0) for i in ids}


def eval_samples(pz, rng, n):
    """Sample n points of a PZ (random dependent and error factors)."""
    asn = {i: rng.uniform(-1.0, 1.0, size=n) for i in pz.ids}
    err = rng.uniform(-1.0, 1.0, size=(n, pz.n_err)) if pz.n_err else None
    return pz.evaluate_batch(asn, err)


# --- random expression trees over named base factors ------------------

_OPS = ("add", "sub", "mul", "sin", "cos", "reduce", "scale", "slice")

# intermediates are reduced once they outgrow this; reduction is
# containment-preserving so the oracle claim survives it
_GEN_CAP = 60


def _capped(pz):
    if pz.n_dep > _GEN_CAP or pz.n_err > _GEN_CAP:
        return pz.reduce(_GEN_CAP // 2, max_err_gens=_GEN_CAP // 2)
    return pz


def random_expression(rng, depth=3, n_factors=2):
    """Build (pz, pointwise_fn, ids) where pointwise_fn maps a dict of
    (n,)-arrays of factor values to the exact expression values; it is the
    independent oracle for containment checks."""
    ids = tuple(f"x{i}" for i in range(n_factors))

    def leaf():
        lo = rng.uniform(-0.4, 0.1)
        hi = lo + rng.uniform(0.0, 0.5)
        fid = ids[rng.integers(0, n_factors)]
        c, r = 0.5 * (lo + hi), 0.5 * (hi - lo)
        pz = PolyZonotope(np.array([c]), np.array([[r]]),
                          np.array([[1]], dtype=np.int64), (fid,))
        return pz, (lambda a, c=c, r=r, fid=fid: c + r * a[fid])

    def build(d):
        if d == 0:
            return leaf()
        op = _OPS[rng.integers(0, len(_OPS))]
        if op in ("add", "sub", "mul"):
            p1, f1 = build(d - 1)
            p2, f2 = build(d - 1)
            if op == "add":
                return _capped(p1 + p2), (lambda a: f1(a) + f2(a))
            if op == "sub":
                return _capped(p1 - p2), (lambda a: f1(a) - f2(a))
            return _capped(p1 * p2), (lambda a: f1(a) * f2(a))
        p1, f1 = build(d - 1)
        if op == "sin":
            return _capped(sin_pz(p1)), (lambda a: np.sin(f1(a)))
        if op == "cos":
            return _capped(cos_pz(p1)), (lambda a: np.cos(f1(a)))
        if op == "reduce":
            return p1.reduce(max(1, int(rng.integers(1, 6)))), f1
        if op == "slice":
            fid = ids[rng.integers(0, n_factors)]
            v = float(rng.uniform(-1.0, 1.0))
            fixed = (lambda a, f1=f1, fid=fid, v=v:
                     f1({**a, fid: np.full_like(next(iter(a.values())), v)}))
            return p1.slice(fid, v), fixed
        s = float(rng.uniform(-2.0, 2.0))
        return p1 * s, (lambda a: f1(a) * s)

    pz, fn = build(depth)
    return pz, fn, ids


def check_expression_containment(rng, n_samples, depth=3, tol=1e-9):
    """Number of containment violations for one random expression."""
    pz, fn, ids = random_expression(rng, depth=depth)
    enc = pz.enclosure()
    a = {i: rng.uniform(-1.0, 1.0, size=n_samples) for i in ids}
    vals = fn(a)
    return int(np.count_nonzero((vals < enc.lo[0] - tol) | (vals > enc.hi[0] + tol)))
