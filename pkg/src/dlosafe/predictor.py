"""Joint DLO shape/tension predictor.

A single gated recurrent cell (hidden 64 by default) consumes the
initial chain state plus one end-position waypoint per step and emits
the full node layout and the end tension vector at every step.  All
positions are normalized to the anchor frame so the model is
translation invariant.  Forward, backprop-through-time, Adam, and the
interval set-propagation used for certification are implemented here
directly on numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dlo import DloState
from .geometry import box_project_out, box_signed_distance
from .pzono import IntervalVector

__all__ = ["PredictorWeights", "PredictionInput", "TrainHyper", "ModelFault",
           "UnverifiableSet", "forward", "contact_project", "train",
           "estimate_eps", "forward_set", "SeqBatch"]

WEIGHTS_VERSION = 1

_ARRAY_NAMES = ("W_emb", "b_emb", "W_z", "U_z", "b_z", "W_r", "U_r", "b_r",
                "W_c", "U_c", "b_c", "W_s", "b_s", "W_f", "b_f")


class ModelFault(RuntimeError):
    """Non-finite activation or inconsistent weight shapes."""


class UnverifiableSet(RuntimeError):
    """Interval propagation exceeded the configured width budget."""


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500.0, 500.0)))


@dataclass
class PredictorWeights:
    n_nodes: int
    hidden: int
    f_scale: float
    arrays: dict
    eps: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def input_dim(self):
        return 6 * self.n_nodes + 3

    @property
    def shape_dim(self):
        return 3 * self.n_nodes

    @classmethod
    def init(cls, n_nodes, hidden=64, f_scale=10.0, seed=0):
        rng = np.random.default_rng(seed)
        D = 6 * n_nodes + 3
        S = 3 * n_nodes

        def u(rows, cols):
            s = 1.0 / np.sqrt(cols)
            return rng.uniform(-s, s, size=(rows, cols))

        arrays = {
            "W_emb": u(hidden, D), "b_emb": np.zeros(hidden),
            "W_z": u(hidden, hidden), "U_z": u(hidden, hidden), "b_z": np.zeros(hidden),
            "W_r": u(hidden, hidden), "U_r": u(hidden, hidden), "b_r": np.zeros(hidden),
            "W_c": u(hidden, hidden), "U_c": u(hidden, hidden), "b_c": np.zeros(hidden),
            "W_s": u(S, hidden), "b_s": np.zeros(S),
            "W_f": u(3, hidden), "b_f": np.zeros(3),
        }
        return cls(n_nodes=n_nodes, hidden=hidden, f_scale=f_scale, arrays=arrays)

    def validate(self):
        D, S, H = self.input_dim, self.shape_dim, self.hidden
        want = {"W_emb": (H, D), "b_emb": (H,),
                "W_z": (H, H), "U_z": (H, H), "b_z": (H,),
                "W_r": (H, H), "U_r": (H, H), "b_r": (H,),
                "W_c": (H, H), "U_c": (H, H), "b_c": (H,),
                "W_s": (S, H), "b_s": (S,), "W_f": (3, H), "b_f": (3,)}
        for name, shape in want.items():
            a = self.arrays.get(name)
            if a is None or a.shape != shape:
                raise ModelFault(f"weight array {name} missing or misshaped")
            if not np.all(np.isfinite(a)):
                raise ModelFault(f"weight array {name} has non-finite entries")
        if self.eps is not None and self.eps < 0:
            raise ModelFault("eps must be nonnegative")

    def copy(self):
        return PredictorWeights(self.n_nodes, self.hidden, self.f_scale,
                                {k: v.copy() for k, v in self.arrays.items()},
                                self.eps, dict(self.meta))

    def to_json(self, path):
        doc = {
            "version": WEIGHTS_VERSION,
            "n_nodes": self.n_nodes,
            "hidden": self.hidden,
            "f_scale": self.f_scale,
            "eps": self.eps,
            "meta": self.meta,
            "arrays": {k: v.tolist() for k, v in self.arrays.items()},
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("version") != WEIGHTS_VERSION:
            raise ModelFault(f"unsupported weights version {doc.get('version')}")
        w = cls(n_nodes=int(doc["n_nodes"]), hidden=int(doc["hidden"]),
                f_scale=float(doc["f_scale"]),
                arrays={k: np.asarray(v, dtype=float) for k, v in doc["arrays"].items()},
                eps=None if doc["eps"] is None else float(doc["eps"]),
                meta=doc.get("meta", {}))
        w.validate()
        return w


@dataclass
class PredictionInput:
    x0_full: DloState
    grip_traj: np.ndarray  # (T, 3)

    def __post_init__(self):
        self.grip_traj = np.atleast_2d(np.asarray(self.grip_traj, dtype=float))
        if self.grip_traj.shape[0] == 0:
            raise ValueError("grip trajectory must be nonempty")
        if not np.all(np.isfinite(self.grip_traj)):
            raise ValueError("grip trajectory must be finite")


def state_features(x0_full, anchor):
    """Anchor-normalized position + velocity features, shape (6*(N+1),)."""
    rel = x0_full.nodes - anchor[None, :]
    return np.concatenate([rel.ravel(), x0_full.velocities.ravel()])


# ---------------------------------------------------------------------
# forward passes


def _cell_sequence(arrays, x0_feats, grips):
    """Shared batched recurrence.

    x0_feats: (B, 6*(N+1)); grips: (B, T, 3), already anchor-normalized.
    Returns (shapes (B,T,S), forces (B,T,3), cache) with forces in model
    scale (divide by f_scale happens outside).
    """
    B, T, _ = grips.shape
    H = arrays["b_z"].shape[0]
    h = np.zeros((B, H))
    shapes = []
    forces = []
    cache = {"e": [], "z": [], "r": [], "c": [], "h_prev": [], "u": [], "h": []}
    for t in range(T):
        u = np.concatenate([x0_feats, grips[:, t, :]], axis=1)
        e = u @ arrays["W_emb"].T + arrays["b_emb"]
        z = _sigmoid(e @ arrays["W_z"].T + h @ arrays["U_z"].T + arrays["b_z"])
        r = _sigmoid(e @ arrays["W_r"].T + h @ arrays["U_r"].T + arrays["b_r"])
        c = np.tanh(e @ arrays["W_c"].T + (r * h) @ arrays["U_c"].T + arrays["b_c"])
        h_new = (1.0 - z) * h + z * c
        cache["u"].append(u)
        cache["e"].append(e)
        cache["z"].append(z)
        cache["r"].append(r)
        cache["c"].append(c)
        cache["h_prev"].append(h)
        cache["h"].append(h_new)
        h = h_new
        shapes.append(h @ arrays["W_s"].T + arrays["b_s"])
        forces.append(h @ arrays["W_f"].T + arrays["b_f"])
    return np.stack(shapes, axis=1), np.stack(forces, axis=1), cache


def contact_project(nodes, scene):
    """Move penetrated nodes to the nearest obstacle-surface point."""
    nodes = np.asarray(nodes, dtype=float)
    if scene is None or scene.obstacle is None:
        return nodes.copy()
    out = nodes.copy()
    inside = np.nonzero(box_signed_distance(nodes, scene.obstacle) < 0.0)[0]
    for i in inside:
        out[i] = box_project_out(out[i], scene.obstacle)
    return out


def forward(w, inp, scene):
    """Deployed prediction path: one recurrent step per grip waypoint,
    contact projection applied to each emitted shape."""
    anchor = scene.anchor
    feats = state_features(inp.x0_full, anchor)[None, :]
    grips = (inp.grip_traj - anchor[None, :])[None, :, :]
    shapes, forces, _ = _cell_sequence(w.arrays, feats, grips)
    if not (np.all(np.isfinite(shapes)) and np.all(np.isfinite(forces))):
        raise ModelFault("non-finite activation in forward pass")
    out = []
    for t in range(shapes.shape[1]):
        nodes = shapes[0, t].reshape(w.n_nodes, 3) + anchor[None, :]
        nodes = contact_project(nodes, scene)
        out.append((nodes, w.f_scale * forces[0, t]))
    return out


# ---------------------------------------------------------------------
# training


@dataclass
class TrainHyper:
    lr: float = 1e-4
    batch: int = 64
    max_epochs: int = 800
    patience: int = 30
    hidden: int = 64
    f_scale: float = 10.0
    force_weight: float = 1.0
    grad_clip: float = 5.0
    seed: int = 0


@dataclass
class SeqBatch:
    """Anchor-normalized training windows."""

    x0: np.ndarray      # (B, 6*(N+1))
    grips: np.ndarray   # (B, T, 3)
    shapes: np.ndarray  # (B, T, 3*(N+1))
    forces: np.ndarray  # (B, T, 3), raw newtons

    def __post_init__(self):
        for name in ("x0", "grips", "shapes", "forces"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def size(self):
        return self.x0.shape[0]

    def subset(self, idx):
        return SeqBatch(self.x0[idx], self.grips[idx], self.shapes[idx],
                        self.forces[idx])


def _loss_and_grads(arrays, batch, f_scale, force_weight, want_grads=True):
    shapes, forces, cache = _cell_sequence(arrays, batch.x0, batch.grips)
    ys = batch.shapes
    yf = batch.forces / f_scale
    ds = shapes - ys
    df = forces - yf
    B, T, S = ds.shape
    loss = (np.abs(ds).mean() + force_weight * np.abs(df).mean())
    if not want_grads:
        return loss, None
    gs = np.sign(ds) / ds.size
    gf = force_weight * np.sign(df) / df.size

    g = {k: np.zeros_like(v) for k, v in arrays.items()}
    H = arrays["b_z"].shape[0]
    dh_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dst = gs[:, t, :]
        dft = gf[:, t, :]
        h = cache["h"][t]
        g["W_s"] += dst.T @ h
        g["b_s"] += dst.sum(axis=0)
        g["W_f"] += dft.T @ h
        g["b_f"] += dft.sum(axis=0)
        dh = dst @ arrays["W_s"] + dft @ arrays["W_f"] + dh_next

        z, r, c = cache["z"][t], cache["r"][t], cache["c"][t]
        h_prev, e = cache["h_prev"][t], cache["e"][t]
        dz = dh * (c - h_prev)
        dc = dh * z
        dh_prev = dh * (1.0 - z)
        dcpre = dc * (1.0 - c * c)
        g["W_c"] += dcpre.T @ e
        g["U_c"] += dcpre.T @ (r * h_prev)
        g["b_c"] += dcpre.sum(axis=0)
        drh = dcpre @ arrays["U_c"]
        dr = drh * h_prev
        dh_prev += drh * r
        drpre = dr * r * (1.0 - r)
        g["W_r"] += drpre.T @ e
        g["U_r"] += drpre.T @ h_prev
        g["b_r"] += drpre.sum(axis=0)
        dh_prev += drpre @ arrays["U_r"]
        dzpre = dz * z * (1.0 - z)
        g["W_z"] += dzpre.T @ e
        g["U_z"] += dzpre.T @ h_prev
        g["b_z"] += dzpre.sum(axis=0)
        dh_prev += dzpre @ arrays["U_z"]
        de = dzpre @ arrays["W_z"] + drpre @ arrays["W_r"] + dcpre @ arrays["W_c"]
        g["W_emb"] += de.T @ cache["u"][t]
        g["b_emb"] += de.sum(axis=0)
        dh_next = dh_prev
    return loss, g


class _Adam:
    def __init__(self, arrays, lr, clip):
        self.lr = lr
        self.clip = clip
        self.b1, self.b2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}

    def step(self, arrays, grads):
        self.t += 1
        norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        scale = min(1.0, self.clip / max(norm, 1e-12))
        for k in arrays:
            gk = grads[k] * scale
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * gk
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * gk * gk
            mhat = self.m[k] / (1 - self.b1 ** self.t)
            vhat = self.v[k] / (1 - self.b2 ** self.t)
            arrays[k] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _eval_loss(arrays, batch, f_scale, force_weight, chunk=512):
    total, count = 0.0, 0
    for s in range(0, batch.size, chunk):
        sub = batch.subset(slice(s, s + chunk))
        loss, _ = _loss_and_grads(arrays, sub, f_scale, force_weight, want_grads=False)
        total += loss * sub.size
        count += sub.size
    return total / max(count, 1)


def train(train_data, val_data, hyper=None, n_nodes=None):
    """Minimize L1 loss over (shape, scaled force) with Adam and
    validation-based early stopping; returns the best-validation weights
    and the loss history (eps is filled separately by estimate_eps)."""
    hyper = hyper or TrainHyper()
    if n_nodes is None:
        n_nodes = train_data.shapes.shape[2] // 3
    w = PredictorWeights.init(n_nodes, hyper.hidden, hyper.f_scale, seed=hyper.seed)
    arrays = w.arrays
    opt = _Adam(arrays, hyper.lr, hyper.grad_clip)
    rng = np.random.default_rng(hyper.seed + 1)

    history = []
    best_val = float(_eval_loss(arrays, val_data, hyper.f_scale, hyper.force_weight))
    history.append({"epoch": 0, "val": best_val, "train": None})
    best_arrays = {k: v.copy() for k, v in arrays.items()}
    best_epoch = 0
    stale = 0
    stopped_early = False
    for epoch in range(1, hyper.max_epochs + 1):
        order = rng.permutation(train_data.size)
        tot, cnt = 0.0, 0
        for s in range(0, len(order), hyper.batch):
            sub = train_data.subset(order[s:s + hyper.batch])
            loss, grads = _loss_and_grads(arrays, sub, hyper.f_scale,
                                          hyper.force_weight)
            if not np.isfinite(loss):
                raise ModelFault(f"training diverged at epoch {epoch}")
            opt.step(arrays, grads)
            tot += loss * sub.size
            cnt += sub.size
        val = _eval_loss(arrays, val_data, hyper.f_scale, hyper.force_weight)
        history.append({"epoch": epoch, "val": val, "train": tot / cnt})
        if val < best_val - 1e-12:
            best_val = float(val)
            best_arrays = {k: v.copy() for k, v in arrays.items()}
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= hyper.patience:
                stopped_early = True
                break
    w.arrays = best_arrays
    w.meta = {"best_epoch": best_epoch, "best_val": best_val,
              "epochs_run": int(history[-1]["epoch"]),
              "stopped_early": stopped_early,
              "val_epoch0": float(history[0]["val"]),
              "hyper": {"lr": hyper.lr, "batch": hyper.batch,
                        "patience": hyper.patience,
                        "force_weight": hyper.force_weight}}
    return w, history


def estimate_eps(w, test_data):
    """Largest force residual over every test frame (newtons)."""
    if test_data.size == 0:
        raise ValueError("empty test set")
    worst = 0.0
    for s in range(0, test_data.size, 512):
        sub = test_data.subset(slice(s, s + 512))
        _, forces, _ = _cell_sequence(w.arrays, sub.x0, sub.grips)
        res = np.linalg.norm(w.f_scale * forces - sub.forces, axis=2)
        worst = max(worst, float(res.max()))
    return worst


# ---------------------------------------------------------------------
# interval set propagation


class _IvPair:
    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        self.lo = lo
        self.hi = hi

    @classmethod
    def point(cls, x):
        return cls(x.copy(), x.copy())

    def width(self):
        return self.hi - self.lo


def _iv_linear(W, b, x):
    c = 0.5 * (x.lo + x.hi)
    r = 0.5 * (x.hi - x.lo)
    cc = c @ W.T + b
    rr = r @ np.abs(W).T
    return _IvPair(cc - rr, cc + rr)


def _iv_add(a, b):
    return _IvPair(a.lo + b.lo, a.hi + b.hi)


def _iv_mul(a, b):
    p1 = a.lo * b.lo
    p2 = a.lo * b.hi
    p3 = a.hi * b.lo
    p4 = a.hi * b.hi
    return _IvPair(np.minimum(np.minimum(p1, p2), np.minimum(p3, p4)),
                   np.maximum(np.maximum(p1, p2), np.maximum(p3, p4)))


def _iv_mono(fn, a):
    return _IvPair(fn(a.lo), fn(a.hi))


def _iv_rsub1(a):  # 1 - a
    return _IvPair(1.0 - a.hi, 1.0 - a.lo)


def forward_set(w, grip_pzs, x0_full, scene, max_width=50.0):
    """Sound per-step enclosures of the deployed forward pass over a set
    of grip waypoints (given as polynomial zonotopes).

    Linear layers propagate interval boxes exactly; the gate
    nonlinearities use monotone endpoint enclosures; the recurrent state
    is carried as an interval.  Contact projection is applied to the
    interval midpoint with the displacement plus a penetration-depth
    bound added to the radius, which keeps the enclosure sound for every
    projected point.  Returns [(shape IntervalVector, force
    IntervalVector)] in world coordinates / newtons.
    """
    arrays = w.arrays
    anchor = scene.anchor
    feats = state_features(x0_full, anchor)
    H = arrays["b_z"].shape[0]
    h = _IvPair(np.zeros(H), np.zeros(H))
    out = []
    for pz in grip_pzs:
        enc = pz if isinstance(pz, IntervalVector) else pz.enclosure()
        g = _IvPair(enc.lo - anchor, enc.hi - anchor)
        u = _IvPair(np.concatenate([feats, g.lo]), np.concatenate([feats, g.hi]))
        e = _iv_linear(arrays["W_emb"], arrays["b_emb"], u)
        z = _iv_mono(_sigmoid, _iv_add(_iv_linear(arrays["W_z"], arrays["b_z"], e),
                                       _iv_linear(arrays["U_z"], 0.0, h)))
        r = _iv_mono(_sigmoid, _iv_add(_iv_linear(arrays["W_r"], arrays["b_r"], e),
                                       _iv_linear(arrays["U_r"], 0.0, h)))
        rh = _iv_mul(r, h)
        c = _iv_mono(np.tanh, _iv_add(_iv_linear(arrays["W_c"], arrays["b_c"], e),
                                      _iv_linear(arrays["U_c"], 0.0, rh)))
        h = _iv_add(_iv_mul(_iv_rsub1(z), h), _iv_mul(z, c))
        if float(h.width().max()) > max_width:
            raise UnverifiableSet("hidden-state interval exceeded width budget")

        s = _iv_linear(arrays["W_s"], arrays["b_s"], h)
        f = _iv_linear(arrays["W_f"], arrays["b_f"], h)
        shape_lo = s.lo.reshape(w.n_nodes, 3) + anchor[None, :]
        shape_hi = s.hi.reshape(w.n_nodes, 3) + anchor[None, :]
        shape_lo, shape_hi = _project_interval(shape_lo, shape_hi, scene)
        if float((shape_hi - shape_lo).max()) > max_width:
            raise UnverifiableSet("shape interval exceeded width budget")
        out.append((IntervalVector(shape_lo.ravel(), shape_hi.ravel()),
                    IntervalVector(w.f_scale * f.lo, w.f_scale * f.hi)))
    return out


def _project_interval(lo, hi, scene):
    """Contact handling on node interval boxes (see forward_set)."""
    if scene is None or scene.obstacle is None:
        return lo, hi
    box = scene.obstacle
    out_lo, out_hi = lo.copy(), hi.copy()
    for i in range(lo.shape[0]):
        mid = 0.5 * (lo[i] + hi[i])
        rad = 0.5 * (hi[i] - lo[i])
        # local-frame interval of the node box
        cl = box.to_local(mid)
        rl = np.abs(box.R.T) @ rad
        # lower bounds of |p_local| - half over the node box; penetration
        # needs every component negative, and the depth of any point is
        # at most min over components of the attainable -q_i
        a_lo = np.maximum(np.abs(cl) - rl, 0.0) - box.half
        depth_bound = 0.0
        if np.all(a_lo < 0.0):
            depth_bound = min(float(np.min(-a_lo)), float(np.min(box.half)))
        proj = box_project_out(mid, box)
        disp = np.abs(proj - mid)
        out_lo[i] = proj - rad - disp - depth_bound
        out_hi[i] = proj + rad + disp + depth_bound
    return out_lo, out_hi
