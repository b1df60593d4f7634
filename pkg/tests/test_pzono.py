import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlosafe.pzono import (
    IntervalVector,
    PolyZonotope,
    cos_pz,
    pz_from_interval,
    pz_stack,
    sin_pz,
)
from pz_tools import check_expression_containment, eval_samples, random_pz, sample_assignment


def make_pz(c, gens, ids, exps, err=None):
    return PolyZonotope(np.atleast_1d(c), np.array(gens, dtype=float),
                        np.array(exps, dtype=np.int64), ids, err)


class TestIntervalVector:
    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            IntervalVector([0.0, 1.0], [1.0, 0.0])

    def test_sup_norm2_exact_on_box(self):
        iv = IntervalVector([-3.0, 1.0], [2.0, 4.0])
        assert iv.sup_norm2() == pytest.approx(5.0)


class TestFromInterval:
    def test_box_center_halfwidth(self):
        pz = pz_from_interval(IntervalVector([0.0, -1.0], [2.0, 1.0]))
        assert np.allclose(pz.c, [1.0, 0.0])
        assert pz.n_dep == 2
        # one factor per dimension, diagonal half-widths
        assert np.allclose(sorted(np.abs(pz.G).max(axis=0)), [1.0, 1.0])
        assert np.allclose(np.abs(pz.G).sum(axis=1), [1.0, 1.0])

    def test_degenerate_point(self):
        pz = pz_from_interval(IntervalVector([3.0], [3.0]))
        assert pz.n_dep == 0 and pz.n_err == 0
        assert np.allclose(pz.c, [3.0])

    def test_slices_sweep_box(self):
        rng = np.random.default_rng(0)
        lo = rng.uniform(-2, 0, size=5)
        hi = lo + rng.uniform(0.1, 3, size=5)
        box = IntervalVector(lo, hi)
        pz = pz_from_interval(box)
        pts = eval_samples(pz, rng, 10_000)
        assert np.all(pts >= lo[None, :] - 1e-12)
        assert np.all(pts <= hi[None, :] + 1e-12)


class TestAdd:
    def test_additive_identity(self):
        rng = np.random.default_rng(1)
        a = random_pz(rng, 2)
        zero = pz_from_interval(IntervalVector([0.0, 0.0], [0.0, 0.0]))
        s = a + zero
        assert np.allclose(s.c, a.c)
        enc_a, enc_s = a.enclosure(), s.enclosure()
        assert np.allclose(enc_a.lo, enc_s.lo) and np.allclose(enc_a.hi, enc_s.hi)

    def test_shared_factor_polynomial_sum(self):
        a = make_pz([1.0], [[1.0]], ("k",), [[1]])
        b = make_pz([2.0], [[3.0]], ("k",), [[1]])
        s = (a + b).slice("k", 0.5)
        assert s.c[0] == pytest.approx(5.0, abs=1e-12)
        assert s.n_dep == 0

    def test_dimension_mismatch(self):
        a = random_pz(np.random.default_rng(2), 2)
        b = random_pz(np.random.default_rng(3), 3)
        with pytest.raises(ValueError):
            _ = a + b

    def test_sampled_sums_contained(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            a = random_pz(rng, 3, ids=("u", "v"))
            b = random_pz(rng, 3, ids=("v", "w"))
            s = a + b
            enc = s.enclosure()
            for _ in range(500):
                asn = sample_assignment(rng, ("u", "v", "w"))
                ea = rng.uniform(-1, 1, size=a.n_err)
                eb = rng.uniform(-1, 1, size=b.n_err)
                x = a.evaluate(asn, ea) + b.evaluate(asn, eb)
                assert enc.contains(x, tol=1e-9)


class TestMul:
    def test_square_by_exponent(self):
        k = make_pz([0.0], [[1.0]], ("k",), [[1]])
        sq = (k * k).slice("k", 0.7)
        assert sq.c[0] == pytest.approx(0.49, abs=1e-12)

    def test_multiplicative_identity(self):
        rng = np.random.default_rng(5)
        a = random_pz(rng, 3)
        one = PolyZonotope.scalar(1.0)
        p = a * one
        enc_a, enc_p = a.enclosure(), p.enclosure()
        assert np.allclose(enc_a.lo, enc_p.lo) and np.allclose(enc_a.hi, enc_p.hi)
        asn = sample_assignment(rng, a.ids)
        e = rng.uniform(-1, 1, size=a.n_err)
        assert np.allclose(a.evaluate(asn, e), p.evaluate(asn, np.concatenate([e, np.zeros(p.n_err - a.n_err)])))

    def test_sampled_products_contained(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            a = random_pz(rng, 3, ids=("u", "v"), scale=0.7)
            b = random_pz(rng, 3, ids=("v",), scale=0.7)
            p = a * b
            enc = p.enclosure()
            for _ in range(500):
                asn = sample_assignment(rng, ("u", "v"))
                ea = rng.uniform(-1, 1, size=a.n_err)
                eb = rng.uniform(-1, 1, size=b.n_err)
                x = a.evaluate(asn, ea) * b.evaluate(asn, eb)
                assert enc.contains(x, tol=1e-9)

    def test_scalar_vector_broadcast(self):
        rng = np.random.default_rng(7)
        s = make_pz([2.0], [[0.5]], ("k",), [[1]])
        v = random_pz(rng, 3, ids=("k",), n_err=0)
        p = s * v
        assert p.dim == 3
        for _ in range(100):
            asn = sample_assignment(rng, ("k",))
            x = s.evaluate(asn) * v.evaluate(asn)
            assert np.allclose(p.evaluate(asn), x, atol=1e-12)


class TestSlice:
    def test_slice_at_zero_drops_generator(self):
        a = make_pz([1.5], [[2.0]], ("k",), [[1]])
        s = a.slice("k", 0.0)
        assert s.n_dep == 0
        assert s.c[0] == pytest.approx(1.5)

    def test_slice_commutes(self):
        rng = np.random.default_rng(8)
        a = random_pz(rng, 2, ids=("p", "q", "r"))
        s1 = a.slice("p", 0.3).slice("q", -0.6)
        s2 = a.slice("q", -0.6).slice("p", 0.3)
        assert np.allclose(s1.c, s2.c)
        e1, e2 = s1.enclosure(), s2.enclosure()
        assert np.allclose(e1.lo, e2.lo) and np.allclose(e1.hi, e2.hi)

    def test_slice_shrinks_enclosure(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            a = random_pz(rng, 3)
            fid = a.ids[0]
            s = a.slice(fid, rng.uniform(-1, 1))
            outer, inner = a.enclosure(), s.enclosure()
            assert np.all(inner.lo >= outer.lo - 1e-9)
            assert np.all(inner.hi <= outer.hi + 1e-9)

    def test_missing_factor_is_noop(self):
        a = make_pz([1.0], [[1.0]], ("k",), [[1]])
        assert a.slice("nope", 0.5) is a

    def test_out_of_range_value(self):
        a = make_pz([1.0], [[1.0]], ("k",), [[1]])
        with pytest.raises(ValueError):
            a.slice("k", 1.5)


class TestEnclosure:
    def test_linear_generator(self):
        a = make_pz([1.0], [[2.0]], ("k",), [[1]])
        enc = a.enclosure()
        assert enc.lo[0] == pytest.approx(-1.0) and enc.hi[0] == pytest.approx(3.0)

    def test_even_power_range(self):
        a = make_pz([1.0], [[1.0]], ("k",), [[2]])
        enc = a.enclosure()
        assert enc.lo[0] == pytest.approx(1.0) and enc.hi[0] == pytest.approx(2.0)

    def test_sampled_points_inside(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            a = random_pz(rng, 4, n_gens=6, n_err=3)
            enc = a.enclosure()
            pts = eval_samples(a, rng, 10_000)
            assert np.all(pts >= enc.lo[None, :] - 1e-9)
            assert np.all(pts <= enc.hi[None, :] + 1e-9)


class TestReduce:
    def test_below_count_unchanged(self):
        rng = np.random.default_rng(11)
        a = random_pz(rng, 2, n_gens=3)
        r = a.reduce(10)
        assert r.n_dep == a.n_dep and r.n_err == a.n_err

    def test_fold_widens_or_equal(self):
        rng = np.random.default_rng(12)
        for _ in range(30):
            a = random_pz(rng, 2, n_gens=5)
            r = a.reduce(4)
            assert r.n_dep <= 4
            ea, er = a.enclosure(), r.enclosure()
            assert np.all(er.lo <= ea.lo + 1e-12)
            assert np.all(er.hi >= ea.hi - 1e-12)

    def test_containment_after_aggressive_reduction(self):
        rng = np.random.default_rng(13)
        for _ in range(5):
            a = random_pz(rng, 3, n_gens=8, n_err=2)
            r = a.reduce(1, max_err_gens=4)
            assert r.n_dep <= 1 and r.n_err <= 4
            enc = r.enclosure()
            pts = eval_samples(a, rng, 2_000)
            assert np.all(pts >= enc.lo[None, :] - 1e-9)
            assert np.all(pts <= enc.hi[None, :] + 1e-9)


class TestTrig:
    def test_sin_of_point_zero(self):
        z = PolyZonotope.scalar(0.0)
        s = sin_pz(z)
        enc = s.enclosure()
        assert abs(enc.lo[0]) < 1e-15 and abs(enc.hi[0]) < 1e-15

    def test_cos_known_value(self):
        a = PolyZonotope.scalar(np.pi / 3)
        c = cos_pz(a)
        enc = c.enclosure()
        assert enc.lo[0] <= np.cos(np.pi / 3) <= enc.hi[0]
        assert enc.lo[0] == pytest.approx(0.5, abs=1e-12)
        assert enc.hi[0] - enc.lo[0] < 1e-12

    def test_sampled_sin_inside(self):
        rng = np.random.default_rng(14)
        for _ in range(10):
            c0 = rng.uniform(-np.pi, np.pi)
            r = rng.uniform(0.01, 0.3)
            a = make_pz([c0], [[0.6 * r], [0.4 * r]], ("u", "v"), [[1, 0], [0, 1]])
            s = sin_pz(a)
            enc = s.enclosure()
            asn = {i: rng.uniform(-1, 1, size=2_000) for i in ("u", "v")}
            x = a.evaluate_batch(asn)[:, 0]
            assert np.all(np.sin(x) >= enc.lo[0] - 1e-12)
            assert np.all(np.sin(x) <= enc.hi[0] + 1e-12)

    def test_vector_input_rejected(self):
        with pytest.raises(ValueError):
            sin_pz(PolyZonotope.point([0.0, 1.0]))


class TestComposite:
    def test_random_expressions_contained(self):
        rng = np.random.default_rng(15)
        for _ in range(30):
            assert check_expression_containment(rng, 500, depth=3) == 0

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), depth=st.integers(1, 4))
    def test_expression_containment_property(self, seed, depth):
        rng = np.random.default_rng(seed)
        assert check_expression_containment(rng, 120, depth=depth) == 0

    def test_exact_polynomial_small_instance(self):
        # (1 + 2k) * (3 - k) = 3 + 5k - 2k^2, checked by slicing
        a = make_pz([1.0], [[2.0]], ("k",), [[1]])
        b = make_pz([3.0], [[-1.0]], ("k",), [[1]])
        p = a * b
        for v in np.linspace(-1, 1, 11):
            got = p.slice("k", float(v)).c[0]
            assert got == pytest.approx(3 + 5 * v - 2 * v * v, abs=1e-12)


class TestRestrict:
    def test_subcell_matches_composition(self):
        rng = np.random.default_rng(16)
        a = random_pz(rng, 2, ids=("k",), n_err=1, max_exp=4)
        c, hw = 0.3, 0.25
        r = a.restrict("k", c, hw)
        for v in np.linspace(-1, 1, 9):
            want = a.slice("k", c + hw * v)
            got = r.slice("k", float(v))
            assert np.allclose(got.c, want.c, atol=1e-12)

    def test_restricted_enclosure_inside(self):
        rng = np.random.default_rng(17)
        a = random_pz(rng, 3, ids=("k", "t"))
        r = a.restrict("k", -0.4, 0.2)
        outer, inner = a.enclosure(), r.enclosure()
        assert np.all(inner.lo >= outer.lo - 1e-9)
        assert np.all(inner.hi <= outer.hi + 1e-9)


class TestStack:
    def test_stack_merges_factors(self):
        a = make_pz([1.0], [[1.0]], ("k",), [[1]])
        b = make_pz([2.0], [[3.0]], ("k",), [[1]])
        s = pz_stack([a, b])
        assert s.dim == 2
        sl = s.slice("k", 0.5)
        assert np.allclose(sl.c, [1.5, 3.5])

    def test_stack_preserves_error_gens(self):
        a = PolyZonotope(np.array([0.0]), H=np.array([[0.5]]))
        b = PolyZonotope.scalar(1.0)
        s = pz_stack([a, b])
        enc = s.enclosure()
        assert np.allclose(enc.lo, [-0.5, 1.0]) and np.allclose(enc.hi, [0.5, 1.0])
