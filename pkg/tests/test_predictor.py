import numpy as np
import pytest

from dlosafe.dlo import DloState, Scene
from dlosafe.geometry import OrientedBox, box_signed_distance
from dlosafe.predictor import (
    ModelFault,
    PredictionInput,
    PredictorWeights,
    SeqBatch,
    TrainHyper,
    UnverifiableSet,
    _cell_sequence,
    _loss_and_grads,
    contact_project,
    estimate_eps,
    forward,
    forward_set,
    state_features,
    train,
)
from dlosafe.pzono import IntervalVector, PolyZonotope, pz_from_interval


def make_state(n_nodes, rng=None, scale=0.3):
    rng = rng or np.random.default_rng(0)
    nodes = rng.normal(size=(n_nodes, 3)) * scale
    vels = rng.normal(size=(n_nodes, 3)) * 0.1
    return DloState(nodes, vels, np.zeros(3))


def zero_weights(n_nodes, hidden=8):
    w = PredictorWeights.init(n_nodes, hidden=hidden)
    for k in w.arrays:
        w.arrays[k][:] = 0.0
    return w


class TestForward:
    def test_zero_weights_zero_outputs(self):
        n = 5
        w = zero_weights(n)
        scene = Scene(anchor=np.zeros(3), obstacle=None)
        inp = PredictionInput(make_state(n), np.array([[0.1, 0.0, 0.2],
                                                       [0.2, 0.1, 0.2]]))
        out = forward(w, inp, scene)
        assert len(out) == 2
        for nodes, f in out:
            assert np.allclose(nodes, 0.0)
            assert np.allclose(f, 0.0)

    def test_one_step_matches_hand_computation(self):
        n, H = 2, 3
        w = PredictorWeights.init(n, hidden=H, f_scale=2.0, seed=7)
        scene = Scene(anchor=np.array([0.3, -0.2, 0.1]), obstacle=None)
        x0 = make_state(n, np.random.default_rng(1))
        grip = np.array([[0.05, 0.02, -0.01]])
        out = forward(w, PredictionInput(x0, grip), scene)

        a = w.arrays
        sg = lambda x: 1.0 / (1.0 + np.exp(-x))
        u = np.concatenate([(x0.nodes - scene.anchor).ravel(),
                            x0.velocities.ravel(), grip[0] - scene.anchor])
        e = a["W_emb"] @ u + a["b_emb"]
        h0 = np.zeros(H)
        z = sg(a["W_z"] @ e + a["U_z"] @ h0 + a["b_z"])
        r = sg(a["W_r"] @ e + a["U_r"] @ h0 + a["b_r"])
        c = np.tanh(a["W_c"] @ e + a["U_c"] @ (r * h0) + a["b_c"])
        h = (1 - z) * h0 + z * c
        shape = (a["W_s"] @ h + a["b_s"]).reshape(n, 3) + scene.anchor
        f = 2.0 * (a["W_f"] @ h + a["b_f"])
        assert np.allclose(out[0][0], shape, atol=1e-12)
        assert np.allclose(out[0][1], f, atol=1e-12)

    def test_deterministic(self):
        n = 4
        w = PredictorWeights.init(n, hidden=8, seed=3)
        scene = Scene(anchor=np.zeros(3), obstacle=None)
        inp = PredictionInput(make_state(n), np.random.default_rng(2).normal(size=(6, 3)))
        o1 = forward(w, inp, scene)
        o2 = forward(w, inp, scene)
        for (a1, f1), (a2, f2) in zip(o1, o2):
            assert np.array_equal(a1, a2) and np.array_equal(f1, f2)

    def test_nonfinite_weights_fault(self):
        w = PredictorWeights.init(3, hidden=4)
        w.arrays["W_s"][0, 0] = np.inf
        scene = Scene(anchor=np.zeros(3), obstacle=None)
        with pytest.raises(ModelFault):
            forward(w, PredictionInput(make_state(3), np.zeros((1, 3))), scene)

    def test_empty_grip_rejected(self):
        with pytest.raises(ValueError):
            PredictionInput(make_state(3), np.zeros((0, 3)))


class TestContactProject:
    BOX = OrientedBox(center=[0.0, 0.0, 0.0], yaw=0.0, half=[0.5, 0.5, 0.5])

    def scene(self):
        return Scene(anchor=np.zeros(3), obstacle=self.BOX)

    def test_outside_unchanged(self):
        nodes = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, 0.3]])
        out = contact_project(nodes, self.scene())
        assert np.array_equal(out, nodes)

    def test_center_of_unit_cube(self):
        out = contact_project(np.array([[0.0, 0.0, 0.0]]), self.scene())
        assert np.linalg.norm(out[0]) == pytest.approx(0.5)

    def test_idempotent_and_feasible(self):
        rng = np.random.default_rng(5)
        box = OrientedBox(center=[0.2, -0.1, 0.3], yaw=0.8, half=[0.3, 0.2, 0.25])
        scene = Scene(anchor=np.zeros(3), obstacle=box)
        nodes = rng.uniform(-0.6, 0.9, size=(200, 3))
        out = contact_project(nodes, scene)
        assert np.all(box_signed_distance(out, box) >= -1e-9)
        again = contact_project(out, scene)
        assert np.allclose(again, out, atol=1e-12)

    def test_matches_grid_search_oracle(self):
        rng = np.random.default_rng(6)
        box = OrientedBox(center=[0.1, 0.2, -0.1], yaw=0.6, half=[0.35, 0.22, 0.28])
        scene = Scene(anchor=np.zeros(3), obstacle=box)
        # random strictly interior points
        local = rng.uniform(-1, 1, size=(100, 3)) * (box.half * 0.98)
        queries = box.to_world(local)
        out = contact_project(queries, scene)
        for p, got in zip(queries, out):
            best = _grid_search_projection(p, box)
            assert np.linalg.norm(got - p) <= np.linalg.norm(best - p) + 1e-9
            assert np.linalg.norm(got - best) < 1e-4


def _grid_search_projection(p, box, coarse=41, refine=25, rounds=4):
    """Multi-resolution grid search over the box surface (test oracle)."""
    best, best_d = None, np.inf
    for ax in range(3):
        u, v = [i for i in range(3) if i != ax]
        for sgn in (-1.0, 1.0):
            lo = np.array([-box.half[u], -box.half[v]])
            hi = np.array([box.half[u], box.half[v]])
            ctr = 0.5 * (lo + hi)
            span = hi - lo
            n = coarse
            for _ in range(rounds):
                gu = np.linspace(ctr[0] - span[0] / 2, ctr[0] + span[0] / 2, n)
                gv = np.linspace(ctr[1] - span[1] / 2, ctr[1] + span[1] / 2, n)
                gu = np.clip(gu, -box.half[u], box.half[u])
                gv = np.clip(gv, -box.half[v], box.half[v])
                UU, VV = np.meshgrid(gu, gv)
                cand = np.zeros((n * n, 3))
                cand[:, ax] = sgn * box.half[ax]
                cand[:, u] = UU.ravel()
                cand[:, v] = VV.ravel()
                world = box.to_world(cand)
                d = np.linalg.norm(world - p, axis=1)
                k = int(np.argmin(d))
                ctr = np.array([cand[k, u], cand[k, v]])
                span = span / (n - 1) * 4.0
                n = refine
                face_best, face_d = world[k], d[k]
            if face_d < best_d:
                best, best_d = face_best, face_d
    return best


def synthetic_batch(rng, n_windows, n_nodes, T, noise=0.0):
    """Deterministic nonlinear sequence task for training tests."""
    D = 6 * n_nodes
    x0 = rng.normal(size=(n_windows, D)) * 0.3
    grips = rng.normal(size=(n_windows, T, 3)) * 0.2
    A = rng.normal(size=(3 * n_nodes, 3)) * 0.5
    B = rng.normal(size=(3 * n_nodes, D)) * 0.2
    shapes = np.tanh(grips @ A.T + (x0 @ B.T)[:, None, :])
    C = rng.normal(size=(3, 3))
    forces = 5.0 * np.tanh(np.cumsum(grips, axis=1) @ C.T)
    if noise:
        shapes = shapes + noise * rng.normal(size=shapes.shape)
    return SeqBatch(x0, grips, shapes, forces)


class TestTraining:
    def test_paper_default_learning_rate(self):
        assert TrainHyper().lr == 1e-4

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(8)
        batch = synthetic_batch(rng, 4, 3, 5)
        w = PredictorWeights.init(3, hidden=6, seed=1)
        arrays = w.arrays
        loss0, grads = _loss_and_grads(arrays, batch, 10.0, 1.0)
        h = 1e-6
        checked = 0
        for name in ("W_emb", "U_c", "W_z", "b_r", "W_s", "W_f", "b_emb"):
            a = arrays[name]
            flat_idx = np.random.default_rng(hash(name) % 2**31).integers(
                0, a.size, size=4)
            for fi in flat_idx:
                idx = np.unravel_index(fi, a.shape)
                old = a[idx]
                a[idx] = old + h
                lp, _ = _loss_and_grads(arrays, batch, 10.0, 1.0, want_grads=False)
                a[idx] = old - h
                lm, _ = _loss_and_grads(arrays, batch, 10.0, 1.0, want_grads=False)
                a[idx] = old
                num = (lp - lm) / (2 * h)
                assert grads[name][idx] == pytest.approx(num, rel=2e-4, abs=1e-9)
                checked += 1
        assert checked >= 28

    def test_overfit_single_window(self):
        rng = np.random.default_rng(9)
        batch = synthetic_batch(rng, 1, 4, 5)
        hyper = TrainHyper(lr=3e-3, batch=1, max_epochs=400, patience=400,
                           hidden=24, seed=2)
        w, history = train(batch, batch, hyper)
        assert history[-1]["train"] < 0.1 * history[1]["train"]

    def test_early_stopping_and_best_weights(self):
        rng = np.random.default_rng(10)
        tr = synthetic_batch(rng, 24, 3, 5, noise=0.05)
        va = synthetic_batch(rng, 8, 3, 5, noise=0.05)
        hyper = TrainHyper(lr=2e-3, batch=8, max_epochs=300, patience=10,
                           hidden=12, seed=3)
        w, history = train(tr, va, hyper)
        assert w.meta["stopped_early"]
        vals = [h["val"] for h in history]
        assert w.meta["best_val"] <= vals[-1] + 1e-12
        assert w.meta["best_val"] == pytest.approx(min(vals))

    def test_divergence_raises(self):
        rng = np.random.default_rng(11)
        batch = synthetic_batch(rng, 4, 3, 4)
        batch.shapes[0, 0, 0] = np.nan
        with pytest.raises(ModelFault):
            train(batch, batch, TrainHyper(max_epochs=2, hidden=6))


class TestEstimateEps:
    def test_perfect_predictor_zero_eps(self):
        rng = np.random.default_rng(12)
        w = PredictorWeights.init(3, hidden=6, seed=4)
        batch = synthetic_batch(rng, 6, 3, 4)
        _, forces, _ = _cell_sequence(w.arrays, batch.x0, batch.grips)
        batch.forces = w.f_scale * forces
        assert estimate_eps(w, batch) == 0.0

    def test_single_frame_residual(self):
        rng = np.random.default_rng(13)
        w = PredictorWeights.init(3, hidden=6, seed=4)
        batch = synthetic_batch(rng, 6, 3, 4)
        _, forces, _ = _cell_sequence(w.arrays, batch.x0, batch.grips)
        batch.forces = w.f_scale * forces
        batch.forces[2, 1] += np.array([0.7, 0.0, 0.0])
        assert estimate_eps(w, batch) == pytest.approx(0.7)

    def test_eps_dominates_every_residual(self):
        rng = np.random.default_rng(14)
        w = PredictorWeights.init(4, hidden=8, seed=5)
        batch = synthetic_batch(rng, 10, 4, 6)
        eps = estimate_eps(w, batch)
        _, forces, _ = _cell_sequence(w.arrays, batch.x0, batch.grips)
        res = np.linalg.norm(w.f_scale * forces - batch.forces, axis=2)
        assert eps >= res.max() - 1e-12

    def test_empty_test_set_rejected(self):
        w = PredictorWeights.init(3, hidden=4)
        empty = SeqBatch(np.zeros((0, 18)), np.zeros((0, 2, 3)),
                         np.zeros((0, 2, 9)), np.zeros((0, 2, 3)))
        with pytest.raises(ValueError):
            estimate_eps(w, empty)


class TestForwardSet:
    def setup_method(self):
        self.n = 4
        self.w = PredictorWeights.init(self.n, hidden=10, seed=6)
        self.scene = Scene(anchor=np.array([0.5, 0.0, 0.2]), obstacle=None)
        self.x0 = make_state(self.n, np.random.default_rng(15))

    def grip_pzs(self, centers, radius):
        return [pz_from_interval(IntervalVector(c - radius, c + radius))
                for c in centers]

    def test_degenerate_matches_forward(self):
        centers = np.random.default_rng(16).normal(size=(5, 3)) * 0.2
        pzs = self.grip_pzs(centers, 0.0)
        sets = forward_set(self.w, pzs, self.x0, self.scene)
        point = forward(self.w, PredictionInput(self.x0, centers), self.scene)
        for (siv, fiv), (nodes, f) in zip(sets, point):
            assert np.all(siv.width == 0.0)
            assert np.all(fiv.width == 0.0)
            assert np.allclose(siv.lo, nodes.ravel(), atol=1e-12)
            assert np.allclose(fiv.lo, f, atol=1e-12)

    def test_sampled_forward_inside_sets(self):
        rng = np.random.default_rng(17)
        box = OrientedBox(center=[0.45, 0.05, 0.1], yaw=0.4, half=[0.2, 0.15, 0.2])
        scene = Scene(anchor=np.array([0.5, 0.0, 0.2]), obstacle=box)
        centers = rng.normal(size=(4, 3)) * 0.3 + np.array([0.4, 0.0, 0.15])
        radius = 0.03
        pzs = self.grip_pzs(centers, radius)
        sets = forward_set(self.w, pzs, self.x0, scene)
        for _ in range(300):
            grips = centers + rng.uniform(-radius, radius, size=centers.shape)
            outs = forward(self.w, PredictionInput(self.x0, grips), scene)
            for (siv, fiv), (nodes, f) in zip(sets, outs):
                assert siv.contains(nodes.ravel(), tol=1e-9)
                assert fiv.contains(f, tol=1e-9)

    def test_widening_monotone(self):
        centers = np.random.default_rng(18).normal(size=(3, 3)) * 0.2
        small = forward_set(self.w, self.grip_pzs(centers, 0.01), self.x0, self.scene)
        big = forward_set(self.w, self.grip_pzs(centers, 0.05), self.x0, self.scene)
        for (ss, fs), (sb, fb) in zip(small, big):
            assert np.all(sb.width >= ss.width - 1e-12)
            assert np.all(fb.width >= fs.width - 1e-12)

    def test_width_budget_signal(self):
        centers = np.zeros((3, 3))
        # absurd radius forces the hidden interval past any sane budget
        pzs = self.grip_pzs(centers, 1e6)
        with pytest.raises(UnverifiableSet):
            forward_set(self.w, pzs, self.x0, self.scene, max_width=1e-6)


class TestWeightsIO:
    def test_round_trip(self, tmp_path):
        w = PredictorWeights.init(5, hidden=12, seed=7)
        w.eps = 1.25
        w.meta = {"note": "fixture"}
        path = tmp_path / "weights.json"
        w.to_json(path)
        back = PredictorWeights.from_json(path)
        assert back.eps == 1.25
        assert back.n_nodes == 5 and back.hidden == 12
        for k in w.arrays:
            assert np.array_equal(back.arrays[k], w.arrays[k])

    def test_bad_version_rejected(self, tmp_path):
        import json
        w = PredictorWeights.init(3, hidden=4)
        path = tmp_path / "w.json"
        w.to_json(path)
        doc = json.loads(path.read_text())
        doc["version"] = 999
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelFault):
            PredictorWeights.from_json(path)

    def test_shape_validation(self, tmp_path):
        w = PredictorWeights.init(3, hidden=4)
        w.arrays["W_s"] = w.arrays["W_s"][:, :2]
        with pytest.raises(ModelFault):
            w.validate()
