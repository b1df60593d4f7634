"""Receding-horizon trajectory optimization with set-valued safety
certificates.

One plan covers [0, t_fin]: constant joint acceleration k over
[0, t_plan] followed by a polynomial braking segment that reaches zero
velocity and acceleration at t_fin.  Candidates found by multi-start
projected descent on the predicted-shape cost are only returned if every
reachability check passes: joint position/velocity boxes, interval
torque with the predicted-force interval, forward-occupancy separation
from the obstacle, and the certified tension bound.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import comb

import numpy as np

from ._fastpoly import UPoly, box_from_components, fk_chain_fast, upoly_slice
from .dlo import DloState
from .geometry import obb_separation_margin
from .predictor import PredictionInput, UnverifiableSet, forward, forward_set
from .pzono import IntervalVector, PolyZonotope, pz_stack
from .robot import fk_chain_pz, forward_kinematics, jacobian, rnea

__all__ = ["PlanSpec", "PlanResult", "desired_traj", "traj_pz", "cost",
           "certify", "plan", "tension_bound_ok"]


@dataclass
class PlanSpec:
    goal: np.ndarray                     # desired node positions (N+1, 3)
    t_plan: float = 0.5
    t_fin: float = 1.0
    dt: float = 0.1
    k_max: np.ndarray = field(default_factory=lambda: np.full(7, np.pi / 6))
    f_lim: float = 15.0
    n_p: int | None = None               # cost horizon (stamps), default n_t
    enforce_tension: bool = True          # ablation switch
    n_starts: int = 3
    descent_iters: int = 6
    descent_step: float = 0.35
    fd_step: float = 1e-4
    trig_degree: int = 5
    max_gens: int = 12
    q_margin: float = 0.02               # rad, tracking allowance
    qd_margin: float = 0.05              # rad/s
    w_track: float = 0.02                # m, occupancy inflation
    max_interval_width: float = 50.0
    budget_frac: float = 0.9             # fraction of t_plan usable as compute
    max_cost_evals: int = 240            # deterministic work budget
    max_certify: int = 4
    wall_deadline: bool = False          # opt-in wall-clock backstop

    def __post_init__(self):
        self.goal = np.asarray(self.goal, dtype=float)
        self.k_max = np.atleast_1d(np.asarray(self.k_max, dtype=float))
        if not 0 < self.t_plan < self.t_fin:
            raise ValueError("need 0 < t_plan < t_fin")
        for name, span in (("t_plan", self.t_plan), ("t_fin", self.t_fin)):
            ratio = span / self.dt
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError(f"dt must divide {name}")
        if self.f_lim < 0:
            raise ValueError("f_lim must be nonnegative")
        if self.n_p is not None and not 0 <= self.n_p <= self.n_t:
            raise ValueError("n_p must lie in [0, n_t]")

    @property
    def n_t(self):
        return int(round(self.t_fin / self.dt))

    @property
    def cost_horizon(self):
        return self.n_t if self.n_p is None else self.n_p

    @property
    def stamps(self):
        return self.dt * np.arange(1, self.n_t + 1)


@dataclass
class PlanResult:
    feasible: bool
    k: np.ndarray | None = None
    k_norm: np.ndarray | None = None
    cost: float | None = None
    wall_time: float = 0.0
    n_cost_evals: int = 0
    n_certified: int = 0
    f_pred_stamps: np.ndarray | None = None   # (n_t, 3) pointwise predictions
    shapes_pred: np.ndarray | None = None     # (n_t, N+1, 3)
    audit: dict = field(default_factory=dict)

    def to_dict(self):
        def conv(x):
            if isinstance(x, np.ndarray):
                return x.tolist()
            if isinstance(x, dict):
                return {k: conv(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [conv(v) for v in x]
            if isinstance(x, (np.floating, np.integer)):
                return float(x)
            return x

        return conv({"feasible": self.feasible, "k": self.k,
                     "k_norm": self.k_norm, "cost": self.cost,
                     "wall_time": self.wall_time,
                     "n_cost_evals": self.n_cost_evals,
                     "n_certified": self.n_certified,
                     "f_pred_stamps": self.f_pred_stamps,
                     "audit": self.audit})


# ---------------------------------------------------------------------
# trajectory family


def _brake_coeffs(q0, qd0, k, t_plan, tau):
    """Quartic-in-s braking coefficients (s = (t - t_plan)/tau).

    The boundary conditions (position/velocity/acceleration continuous at
    t_plan, zero velocity and acceleration at t_fin) leave the quintic
    family one degree of freedom; the minimal-degree member has zero
    fifth-order coefficient.
    """
    a0 = q0 + qd0 * t_plan + 0.5 * k * t_plan ** 2
    v1 = qd0 + k * t_plan
    a1 = v1 * tau
    a2 = 0.5 * k * tau ** 2
    a3 = -(3.0 * a1 + 4.0 * a2) / 3.0
    a4 = 0.5 * (a1 + a2)
    return a0, a1, a2, a3, a4


def desired_traj(k, t, q0, qd0, spec):
    """Desired (q, qd, qdd) at time t in [0, t_fin] for acceleration k."""
    k = np.asarray(k, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    qd0 = np.asarray(qd0, dtype=float)
    if t < -1e-12 or t > spec.t_fin + 1e-12:
        raise ValueError(f"time {t} outside [0, {spec.t_fin}]")
    t = min(max(t, 0.0), spec.t_fin)
    if t <= spec.t_plan:
        q = q0 + qd0 * t + 0.5 * k * t * t
        qd = qd0 + k * t
        return q, qd, k.copy()
    tau = spec.t_fin - spec.t_plan
    s = (t - spec.t_plan) / tau
    a0, a1, a2, a3, a4 = _brake_coeffs(q0, qd0, k, spec.t_plan, tau)
    q = a0 + a1 * s + a2 * s * s + a3 * s ** 3 + a4 * s ** 4
    qd = (a1 + 2 * a2 * s + 3 * a3 * s * s + 4 * a4 * s ** 3) / tau
    qdd = (2 * a2 + 6 * a3 * s + 12 * a4 * s * s) / (tau * tau)
    return q, qd, qdd


def _tau_poly_pz(c_const, c_k, kmax_j, joint):
    """Build a scalar PZ from coefficients of tau^d and kappa*tau^d."""
    gens, exps = [], []
    center = c_const[0]
    for d in range(1, len(c_const)):
        if c_const[d] != 0.0:
            gens.append(c_const[d])
            exps.append((d, 0))
    for d in range(len(c_k)):
        if c_k[d] != 0.0:
            gens.append(c_k[d] * kmax_j)
            exps.append((d, 1))
    if not gens:
        return PolyZonotope(np.array([center]))
    G = np.array(gens)[None, :]
    E = np.array(exps, dtype=np.int64)
    return PolyZonotope(np.array([center]), G, E, ("t", f"k{joint}"))


def _shift_poly(coeffs, s_mid, h_s):
    """Recenter sum_n a_n s^n onto s = s_mid + h_s * tau."""
    deg = len(coeffs) - 1
    out = np.zeros(deg + 1)
    for n in range(deg + 1):
        a = coeffs[n]
        if a == 0.0:
            continue
        for m in range(n + 1):
            out[m] += a * comb(n, m) * s_mid ** (n - m) * h_s ** m
    return out


def traj_pz(spec, q0, qd0):
    """Per-interval PZ enclosures of (q, qd, qdd) in factors (t, k_j).

    Within interval i the factor "t" sweeps [t_{i-1}, t_i] and "k{j}" the
    normalized acceleration of joint j; the polynomial representation is
    exact, so slicing reproduces desired_traj.
    """
    n_q = len(q0)
    out = []
    tau = spec.t_fin - spec.t_plan
    for i in range(spec.n_t):
        t_lo, t_hi = i * spec.dt, (i + 1) * spec.dt
        t_mid, h = 0.5 * (t_lo + t_hi), 0.5 * spec.dt
        entry = {"q": [], "qd": [], "qdd": [], "t_range": (t_lo, t_hi)}
        phase1 = t_hi <= spec.t_plan + 1e-12
        for j in range(n_q):
            km = spec.k_max[j]
            if phase1:
                # q = q0 + qd0 t + k t^2/2 with t = t_mid + h tau
                qc = np.array([q0[j] + qd0[j] * t_mid, qd0[j] * h, 0.0])
                qk = 0.5 * np.array([t_mid ** 2, 2 * t_mid * h, h * h])
                vc = np.array([qd0[j], 0.0])
                vk = np.array([t_mid, h])
                ac = np.array([0.0])
                ak = np.array([1.0])
            else:
                s_mid = (t_mid - spec.t_plan) / tau
                h_s = h / tau
                a0c, a1c, a2c, a3c, a4c = _brake_coeffs(q0[j], qd0[j], 0.0,
                                                        spec.t_plan, tau)
                a0k, a1k, a2k, a3k, a4k = _brake_coeffs(0.0, 0.0, 1.0,
                                                        spec.t_plan, tau)
                pc = np.array([a0c, a1c, a2c, a3c, a4c])
                pk = np.array([a0k, a1k, a2k, a3k, a4k])
                dc = np.array([a1c, 2 * a2c, 3 * a3c, 4 * a4c]) / tau
                dk = np.array([a1k, 2 * a2k, 3 * a3k, 4 * a4k]) / tau
                cc = np.array([2 * a2c, 6 * a3c, 12 * a4c]) / tau ** 2
                ck = np.array([2 * a2k, 6 * a3k, 12 * a4k]) / tau ** 2
                qc, qk = _shift_poly(pc, s_mid, h_s), _shift_poly(pk, s_mid, h_s)
                vc, vk = _shift_poly(dc, s_mid, h_s), _shift_poly(dk, s_mid, h_s)
                ac, ak = _shift_poly(cc, s_mid, h_s), _shift_poly(ck, s_mid, h_s)
            entry["q"].append(_tau_poly_pz(qc, qk, km, j))
            entry["qd"].append(_tau_poly_pz(vc, vk, km, j))
            entry["qdd"].append(_tau_poly_pz(ac, ak, km, j))
        out.append(entry)
    return out


def _slice_k(pz_list, k_norm):
    out = []
    for j, pz in enumerate(pz_list):
        s = pz
        for jj in range(len(k_norm)):
            s = s.slice(f"k{jj}", k_norm[jj])
        out.append(s)
    return out


# ---------------------------------------------------------------------
# cost


def cost(k_norm, x0_full, weights, scene, spec, model, q0, qd0):
    """Accumulated distance between predicted and desired chain layouts
    along the end-effector waypoints of the candidate trajectory."""
    k = np.asarray(k_norm, dtype=float) * spec.k_max
    grips = []
    for t in spec.stamps[: spec.cost_horizon]:
        q, _, _ = desired_traj(k, t, q0, qd0, spec)
        grips.append(forward_kinematics(model, q)[2])
    preds = forward(weights, PredictionInput(x0_full, np.array(grips)), scene)
    total = 0.0
    for nodes, _ in preds:
        total += float(np.linalg.norm(nodes - spec.goal))
    return total


def tension_bound_ok(force_iv, eps, f_lim):
    """Certified tension condition sup||f|| + eps <= f_lim."""
    return force_iv.sup_norm2() + eps <= f_lim


# ---------------------------------------------------------------------
# certification


def _interval_sets(entry, k_norm, model, spec, need_links):
    """Per-interval bounds and occupancy data for one reach entry.

    Concrete candidates take the univariate fast path; k_norm=None keeps
    the generic named-factor sets so whole-cell certification works.
    """
    if k_norm is not None:
        qs = [upoly_slice(p, k_norm) for p in entry["q"]]
        vs = [upoly_slice(p, k_norm) for p in entry["qd"]]
        as_ = [upoly_slice(p, k_norm) for p in entry["qdd"]]
        links, p_ee = fk_chain_fast(model, qs, trig_degree=spec.trig_degree)
        ee_box = box_from_components(p_ee)
    else:
        qs, vs, as_ = entry["q"], entry["qd"], entry["qdd"]
        links, p_ee = fk_chain_pz(model, qs, trig_degree=spec.trig_degree,
                                  max_gens=spec.max_gens)
        ee_box = pz_stack(p_ee).enclosure()

    def bounds(comps):
        pairs = [(c.bounds() if hasattr(c, "bounds")
                  else (c.enclosure().lo[0], c.enclosure().hi[0]))
                 for c in comps]
        return IntervalVector(np.array([p[0] for p in pairs]),
                              np.array([p[1] for p in pairs]))

    link_data = []
    if need_links:
        for j in range(model.n_q):
            p_iv = bounds(links[j]["p"])
            Rc = np.empty((3, 3))
            Rr = np.empty((3, 3))
            for r in range(3):
                for cix in range(3):
                    if hasattr(links[j]["R"][r][cix], "bounds"):
                        lo, hi = links[j]["R"][r][cix].bounds()
                    else:
                        e = links[j]["R"][r][cix].enclosure()
                        lo, hi = e.lo[0], e.hi[0]
                    Rc[r, cix] = 0.5 * (lo + hi)
                    Rr[r, cix] = 0.5 * (hi - lo)
            link_data.append((p_iv, Rc, Rr))
    return bounds(qs), bounds(vs), bounds(as_), link_data, ee_box


def certify(k_norm, q0, qd0, x0_full, scene, weights, spec, model,
            reach=None, deadline=None):
    """Check every constraint over all subintervals for one candidate
    (k_norm=None certifies the whole parameter cell).

    Returns (ok, audit) where audit carries per-check margins; any
    interval blow-up in the predictor set propagation marks the tension
    check violated ("unverifiable").
    """
    if reach is None:
        reach = traj_pz(spec, q0, qd0)
    audit = {"q_margin": [], "qd_margin": [], "u_margin": [],
             "fo_margin": [], "tension_margin": [], "violations": []}
    ok = True

    q_lo_lim = model.q_lim[:, 0] + spec.q_margin
    q_hi_lim = model.q_lim[:, 1] - spec.q_margin
    qd_lim = model.qd_lim - spec.qd_margin

    ee_pzs = []
    q_mids = []
    per_interval = []
    for i, entry in enumerate(reach):
        if deadline is not None and time.perf_counter() > deadline:
            audit["violations"].append(["deadline", i, -1])
            audit["ok"] = False
            return False, audit
        q_iv, v_iv, a_iv, link_data, ee_box = _interval_sets(
            entry, k_norm, model, spec, scene.obstacle is not None)
        per_interval.append((q_iv, v_iv, a_iv))
        ee_pzs.append(ee_box)

        for j in range(model.n_q):
            mq = min(q_iv.lo[j] - q_lo_lim[j], q_hi_lim[j] - q_iv.hi[j])
            mv = min(v_iv.lo[j] + qd_lim[j], qd_lim[j] - v_iv.hi[j])
            audit["q_margin"].append(float(mq))
            audit["qd_margin"].append(float(mv))
            if mq < 0:
                ok = False
                audit["violations"].append(["q_limit", i, j])
            if mv < 0:
                ok = False
                audit["violations"].append(["qd_limit", i, j])

        q_mid = q_iv.center
        q_mids.append(q_mid)
        if scene.obstacle is not None:
            p_true, R_true, _, _ = forward_kinematics(model, q_mid)
            obs = scene.obstacle
            worst = np.inf
            for j in range(model.n_q):
                p_iv, Rc, Rr = link_data[j]
                E = np.abs(Rc - R_true[j]) + Rr
                c_loc = model.link_box_centers[j]
                h_loc = model.link_box_halves[j]
                center = p_iv.center + R_true[j] @ c_loc
                W = p_iv.radius + E @ (np.abs(c_loc) + h_loc) + spec.w_track
                margin = obb_separation_margin(center, R_true[j], h_loc,
                                               obs.center, obs.R, obs.half,
                                               extra1=W)
                worst = min(worst, margin)
                if margin <= 0.0:
                    ok = False
                    audit["violations"].append(["occupancy", i, j])
            audit["fo_margin"].append(float(worst))
        else:
            audit["fo_margin"].append(float("inf"))

    # predicted-force intervals over every subinterval
    try:
        force_sets = forward_set(weights, ee_pzs, x0_full, scene,
                                 max_width=spec.max_interval_width)
        unverifiable = False
    except UnverifiableSet:
        force_sets = None
        unverifiable = True
        ok = False
        audit["violations"].append(["tension_unverifiable", -1, -1])

    eps = weights.eps if weights.eps is not None else 0.0
    for i in range(len(reach)):
        if force_sets is not None:
            f_iv = force_sets[i][1]
            margin = spec.f_lim - (f_iv.sup_norm2() + eps)
            audit["tension_margin"].append(float(margin))
            if spec.enforce_tension and margin < 0:
                ok = False
                audit["violations"].append(["tension", i, -1])
        else:
            audit["tension_margin"].append(float("-inf"))

        q_iv, v_iv, a_iv = per_interval[i]
        f_for_torque = force_sets[i][1] if force_sets is not None else \
            IntervalVector(np.zeros(3), np.zeros(3))
        u_iv = rnea(model, q_iv, v_iv, v_iv, a_iv, "interval", f_for_torque)
        J = jacobian(model, q_mids[i])
        allow = u_iv.radius + np.linalg.norm(J, axis=0) * eps
        worst = np.inf
        for j in range(model.n_q):
            m = min(u_iv.lo[j] - allow[j] + model.u_lim[j],
                    model.u_lim[j] - u_iv.hi[j] - allow[j])
            worst = min(worst, m)
            if m < 0:
                ok = False
                audit["violations"].append(["torque", i, j])
        audit["u_margin"].append(float(worst))
        if unverifiable and spec.enforce_tension:
            break

    audit["ok"] = ok
    return ok, audit


# ---------------------------------------------------------------------
# planning


def _project_box(k):
    return np.clip(k, -1.0, 1.0)


def plan(joint_state, x0_full, scene, weights, spec, model, rng=None):
    """Multi-start projected descent on the predicted-shape cost with
    certification filtering; Infeasible is a value, not an error."""
    if weights.eps is None:
        raise ValueError("weights carry no certified residual bound; refusing to plan")
    rng = rng or np.random.default_rng(0)
    t_start = time.perf_counter()
    deadline = (t_start + spec.budget_frac * spec.t_plan
                if spec.wall_deadline else None)

    q0, qd0 = joint_state.q, joint_state.qd
    n = model.n_q
    reach = traj_pz(spec, q0, qd0)
    evals = {"n": 0}
    cache = {}

    class _Budget(Exception):
        pass

    def cost_fn(kn):
        key = kn.tobytes()
        if key not in cache:
            if evals["n"] >= spec.max_cost_evals:
                raise _Budget()
            cache[key] = cost(kn, x0_full, weights, scene, spec, model, q0, qd0)
            evals["n"] += 1
        return cache[key]

    starts = [np.zeros(n)]
    for _ in range(max(spec.n_starts - 1, 0)):
        starts.append(rng.uniform(-0.8, 0.8, size=n))

    candidates = [np.zeros(n)]
    try:
        for s0 in starts:
            k = s0.copy()
            fk = cost_fn(k)
            step = spec.descent_step
            try:
                for _ in range(spec.descent_iters):
                    g = np.zeros(n)
                    h = spec.fd_step
                    for j in range(n):
                        kp, km = k.copy(), k.copy()
                        kp[j] = min(kp[j] + h, 1.0)
                        km[j] = max(km[j] - h, -1.0)
                        denom = kp[j] - km[j]
                        g[j] = (cost_fn(kp) - cost_fn(km)) / denom if denom > 0 else 0.0
                    gn = np.linalg.norm(g)
                    if gn < 1e-12:
                        break
                    moved = False
                    while step > 1e-3:
                        k_new = _project_box(k - step * g / gn)
                        f_new = cost_fn(k_new)
                        if f_new < fk - 1e-12:
                            k, fk = k_new, f_new
                            moved = True
                            break
                        step *= 0.5
                    if not moved:
                        break
            finally:
                candidates.append(k.copy())
    except _Budget:
        pass

    # dedupe, order by (cost, ||k||): least-cost feasible wins, small-k ties
    uniq = {}
    for k in candidates:
        if k.tobytes() in cache:
            uniq[k.tobytes()] = k
    ordered = sorted(uniq.values(),
                     key=lambda k: (cache[k.tobytes()], float(np.linalg.norm(k))))

    n_cert = 0
    last_audit = None
    for k in ordered:
        if n_cert >= spec.max_certify:
            break
        if deadline is not None and n_cert > 0 and time.perf_counter() > deadline:
            break
        n_cert += 1
        ok, audit = certify(k, q0, qd0, x0_full, scene, weights, spec, model,
                            reach=reach, deadline=deadline)
        last_audit = audit
        if ok:
            k_real = k * spec.k_max
            grips = []
            for t in spec.stamps:
                qd_t, _, _ = desired_traj(k_real, t, q0, qd0, spec)
                grips.append(forward_kinematics(model, qd_t)[2])
            preds = forward(weights, PredictionInput(x0_full, np.array(grips)),
                            scene)
            return PlanResult(
                feasible=True, k=k_real, k_norm=k.copy(), cost=cache[k.tobytes()],
                wall_time=time.perf_counter() - t_start,
                n_cost_evals=evals["n"], n_certified=n_cert,
                f_pred_stamps=np.array([f for _, f in preds]),
                shapes_pred=np.array([s for s, _ in preds]),
                audit=audit)

    return PlanResult(feasible=False,
                      wall_time=time.perf_counter() - t_start,
                      n_cost_evals=evals["n"], n_certified=n_cert,
                      audit={"reason": "no candidate certified",
                             "last_candidate": last_audit})
