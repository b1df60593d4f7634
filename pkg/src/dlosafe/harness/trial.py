"""One benchmark trial: receding-horizon plan/execute until the chain
reaches the goal drape, a safety violation occurs, or the step budget
runs out.  Safety verdicts come from the simulator alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..controller import control
from ..dlo import DloState, SimulationFault, step as dlo_step
from ..geometry import obb_separation_margin
from ..planner import desired_traj, plan
from ..robot import JointState, forward_dynamics, forward_kinematics, forward_occupancy
from .dataset import plan_spec_from_config
from .scenes import gen_goal_state, gen_trial_scene, settled_start

__all__ = ["Outcome", "run_trial", "VARIANTS"]

VARIANTS = ("full", "no-tension", "half-flim")

GOAL_REACHED = "GoalReached"
FAILED = "FailedWithoutViolation"
ROBOT_COLLISION = "RobotCollision"
DLO_OVEREXTENSION = "DloOverextension"


@dataclass
class Outcome:
    category: str
    steps_used: int
    tension_trace: list = field(default_factory=list)
    fo_margin_trace: list = field(default_factory=list)
    cost_trace: list = field(default_factory=list)
    plan_walls: list = field(default_factory=list)
    plan_feasible: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    n_residual_excursions: int = 0
    max_tracking_err: float = 0.0
    max_vel_err: float = 0.0
    n_tracking_excursions: int = 0
    max_tension: float = 0.0
    min_fo_margin: float = float("inf")
    fault: bool = False
    braking_used: bool = False

    def to_dict(self):
        return {k: (list(map(float, v)) if isinstance(v, list) else
                    (bool(v) if isinstance(v, (bool, np.bool_)) else
                     float(v) if isinstance(v, (int, float, np.floating)) else v))
                for k, v in self.__dict__.items()}


class _ActivePlan:
    """The trajectory currently being tracked, with its braking tail."""

    def __init__(self, k, q0, qd0, spec, f_stamps):
        self.k = k
        self.q0 = q0
        self.qd0 = qd0
        self.spec = spec
        self.f_stamps = f_stamps
        self.t_offset = 0.0

    def desired(self, t_local):
        t = self.t_offset + t_local
        if t >= self.spec.t_fin:
            q, _, _ = desired_traj(self.k, self.spec.t_fin, self.q0, self.qd0,
                                   self.spec)
            return q, np.zeros_like(q), np.zeros_like(q)
        return desired_traj(self.k, t, self.q0, self.qd0, self.spec)

    def f_pred(self, t_local):
        t = self.t_offset + t_local
        i = min(int(t / self.spec.dt), len(self.f_stamps) - 1)
        return self.f_stamps[i]

    def stamp_crossing(self, t_local, dt):
        """Planner stamp index completed within (t_local - dt, t_local]."""
        t = self.t_offset + t_local
        i_now = int(np.floor(t / self.spec.dt + 1e-9))
        i_prev = int(np.floor((t - dt) / self.spec.dt + 1e-9))
        if i_now > i_prev and 1 <= i_now <= len(self.f_stamps):
            return i_now - 1
        return None


class _Hold:
    def __init__(self, q, f_pred):
        self.q = q.copy()
        self._f = f_pred

    def desired(self, t_local):
        z = np.zeros_like(self.q)
        return self.q, z, z

    def f_pred(self, t_local):
        return self._f

    def stamp_crossing(self, t_local, dt):
        return None


def _fo_margin(model, q, scene):
    if scene.obstacle is None:
        return float("inf")
    obs = scene.obstacle
    worst = float("inf")
    for c, R, h in forward_occupancy(model, q):
        worst = min(worst, obb_separation_margin(c, R, h, obs.center, obs.R,
                                                 obs.half))
    return worst


def _goal_reached(state, goal, tol):
    return bool(np.linalg.norm(state.nodes - goal.nodes, axis=1).max() <= tol)


def run_trial(trial_seed, weights, config, variant="full", scene=None,
              goal=None, q_start=None):
    """Run one randomized trial; deterministic in (trial_seed, config,
    weights, variant).  Pre-built scene/goal/q_start override the random
    generation (used by targeted tests)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    ss = np.random.SeedSequence(trial_seed)
    rng_scene, rng_params, rng_plan = [np.random.default_rng(s)
                                       for s in ss.spawn(3)]
    model = config.robot
    dlo_cfg = config.dlo
    gains = config.gains

    if scene is None:
        scene, q_start, goal_grip = gen_trial_scene(rng_scene, config)
        goal, _ = gen_goal_state(scene, goal_grip, config)
    else:
        q_start = np.asarray(q_start, dtype=float)

    spec = plan_spec_from_config(config, goal=goal.nodes.copy())
    if variant == "half-flim":
        spec.f_lim = 0.5 * spec.f_lim
    elif variant == "no-tension":
        spec.enforce_tension = False

    params_true = (rng_params.uniform(model.mass_lo, model.mass_hi),
                   rng_params.uniform(model.com_lo, model.com_hi),
                   rng_params.uniform(model.inertia_lo, model.inertia_hi))

    q = q_start.copy()
    qd = np.zeros(model.n_q)
    dlo = settled_start(q_start, scene, config)
    out = Outcome(category=FAILED, steps_used=0)

    dt = dlo_cfg.dt_sim
    rec_every = max(int(round(dlo_cfg.dt_control / dt)), 1)
    exec_steps = int(round(spec.t_plan / dt))
    prev_frame_nodes = dlo.nodes.copy()
    active = None
    eps = weights.eps if weights.eps is not None else 0.0

    def record_frame():
        nonlocal prev_frame_nodes
        tension = float(np.linalg.norm(dlo.tension_force))
        margin = _fo_margin(model, q, scene)
        out.tension_trace.append(tension)
        out.fo_margin_trace.append(margin)
        out.max_tension = max(out.max_tension, tension)
        out.min_fo_margin = min(out.min_fo_margin, margin)
        if margin < 0.0:
            return ROBOT_COLLISION
        if tension > config.trial.f_lim:
            return DLO_OVEREXTENSION
        prev_frame_nodes = dlo.nodes.copy()
        return None

    for step_i in range(config.trial.step_budget):
        if _goal_reached(dlo, goal, config.trial.goal_tol):
            out.category = GOAL_REACHED
            out.steps_used = step_i
            return out

        fd_vel = (dlo.nodes - prev_frame_nodes) / dlo_cfg.dt_control \
            if step_i else np.zeros_like(dlo.nodes)
        x0_full = DloState(dlo.nodes.copy(), fd_vel, dlo.tension_force.copy())
        plan_rng = np.random.default_rng(
            np.random.SeedSequence(entropy=[trial_seed, 7, step_i]))
        res = plan(JointState(q, qd), x0_full, scene, weights, spec, model,
                   plan_rng)
        out.plan_walls.append(res.wall_time)
        out.plan_feasible.append(res.feasible)
        out.cost_trace.append(res.cost if res.cost is not None else float("nan"))

        if res.feasible:
            active = _ActivePlan(res.k, q.copy(), qd.copy(), spec,
                                 res.f_pred_stamps)
        elif isinstance(active, _ActivePlan):
            active.t_offset += spec.t_plan
            out.braking_used = True
            if active.t_offset >= spec.t_fin:
                q_hold, _, _ = active.desired(0.0)
                active = _Hold(q_hold, active.f_pred(0.0))
        elif active is None:
            active = _Hold(q, dlo.tension_force.copy())
            out.braking_used = True

        try:
            for ci in range(1, exec_steps + 1):
                t_local = ci * dt
                desired = active.desired(t_local)
                f_pred = active.f_pred(t_local)
                u, info = control(model, gains, JointState(q, qd), desired,
                                  f_pred, eps)
                f_true = dlo.tension_force
                qdd = forward_dynamics(model, q, qd, u, f_true, params_true)
                qd = qd + dt * qdd
                q = q + dt * qd
                grip = forward_kinematics(model, q)[2]
                dlo = dlo_step(dlo, grip, scene, dlo_cfg)

                err = float(np.abs(info["e"]).max())
                verr = float(np.abs(qd - desired[1]).max())
                out.max_tracking_err = max(out.max_tracking_err, err)
                out.max_vel_err = max(out.max_vel_err, verr)
                if err > config.trial.max_tracking_err:
                    out.n_tracking_excursions += 1

                stamp = active.stamp_crossing(t_local, dt)
                if stamp is not None:
                    resid = float(np.linalg.norm(
                        dlo.tension_force - active.f_stamps[stamp]))
                    out.residuals.append(resid)
                    if resid > eps:
                        out.n_residual_excursions += 1

                if ci % rec_every == 0:
                    verdict = record_frame()
                    if verdict is not None:
                        out.category = verdict
                        out.steps_used = step_i + 1
                        return out
        except SimulationFault:
            out.fault = True
            out.category = FAILED
            out.steps_used = step_i + 1
            return out
        out.steps_used = step_i + 1

    if _goal_reached(dlo, goal, config.trial.goal_tol):
        out.category = GOAL_REACHED
    else:
        out.category = FAILED
    return out
