"""Robust passivity-based tracking with predicted-force compensation.

The applied torque is nominal inverse dynamics of a commanded motion
whose acceleration is shifted against the composite error (an inertia-
scaled feedback that contracts the error at a configuration-independent
rate), minus the predicted end-effector force mapped through the
Jacobian, minus a smoothed robust term sized by the interval-dynamics
radius plus the certified force-prediction bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .robot import jacobian, rnea

__all__ = ["GainConfig", "control"]


@dataclass
class GainConfig:
    lam: np.ndarray = field(default_factory=lambda: np.full(7, 35.0))
    k_r: float = 25.0       # composite-error decay rate, 1/s
    delta: float = 0.01
    force_compensation: bool = True

    def __post_init__(self):
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if np.any(self.lam <= 0) or self.k_r <= 0:
            raise ValueError("composite-error gains must be positive")
        if self.delta <= 0:
            raise ValueError("smoothing radius must be positive")


def control(model, gains, measured, desired, f_pred, eps):
    """One torque command.

    measured: JointState; desired: (q_d, qd_d, qdd_d); f_pred: predicted
    DLO force on the end-effector (newtons, world frame); eps: certified
    bound on the force-prediction residual.  Returns (u, info) with the
    composite error and disturbance bound for telemetry.
    """
    q, qd = measured.q, measured.qd
    q_d, qd_d, qdd_d = desired
    lam = gains.lam if gains.lam.shape[0] == model.n_q else \
        np.full(model.n_q, float(gains.lam[0]))

    e = q - q_d
    ed = qd - qd_d
    r = ed + lam * e
    qd_aux = qd_d - lam * e
    qdd_aux = qdd_d - lam * ed - gains.k_r * r

    f_pred = np.zeros(3) if f_pred is None else np.asarray(f_pred, dtype=float)
    f_comp = f_pred if gains.force_compensation else np.zeros(3)

    u_nom = rnea(model, q, qd, qd_aux, qdd_aux, "nominal")
    J = jacobian(model, q)

    u_iv = rnea(model, q, qd, qd_aux, qdd_aux, "interval", f_comp)
    w_vec = u_iv.radius + np.linalg.norm(J, axis=0) * float(eps)
    w_m = float(np.linalg.norm(w_vec))
    r_norm = float(np.linalg.norm(r))
    # componentwise smoothed sign: each joint's robust torque is sized by
    # its own disturbance radius, so low-inertia joints are not excited
    # by other joints' uncertainty; ||v|| <= w_m still holds
    v = w_vec * r / np.maximum(np.abs(r), gains.delta)

    u = u_nom - J.T @ f_comp - v
    return u, {"r": r, "r_norm": r_norm, "w_m": w_m, "v": v, "e": e}
