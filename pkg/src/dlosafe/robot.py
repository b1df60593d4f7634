"""Serial-chain manipulator model: kinematics, inverse dynamics with
interval inertial parameters, forward occupancy, and the polynomial-
zonotope forward-kinematics chain used by the planner.

The chain is generic: each revolute joint j rotates about a fixed axis
expressed in its parent frame, after a fixed translation offset.  All
inertial parameters are intervals [lo, hi] with the nominal model at the
midpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._dynkernels import rnea_kernel
from .pzono import IntervalVector, PolyZonotope, cos_pz, sin_pz

__all__ = ["RobotModel", "JointState", "forward_kinematics", "jacobian",
           "rnea", "mass_matrix", "forward_dynamics", "forward_occupancy",
           "fk_chain_pz", "default_model"]

_GRAV = 9.81


@dataclass(frozen=True)
class RobotModel:
    axes: np.ndarray          # (n, 3) unit joint axes in parent frames
    offsets: np.ndarray       # (n, 3) parent-frame translation to each joint
    ee_offset: np.ndarray     # (3,) end-effector point in the last frame
    mass_lo: np.ndarray       # (n,)
    mass_hi: np.ndarray
    com_lo: np.ndarray        # (n, 3) center of mass, link frame
    com_hi: np.ndarray
    inertia_lo: np.ndarray    # (n, 3) principal inertia about the com
    inertia_hi: np.ndarray
    q_lim: np.ndarray         # (n, 2)
    qd_lim: np.ndarray        # (n,) symmetric velocity limit
    u_lim: np.ndarray         # (n,) symmetric torque limit
    link_box_centers: np.ndarray  # (n, 3) link volume boxes, link frame
    link_box_halves: np.ndarray   # (n, 3)
    base_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_R: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        for name in ("axes", "offsets", "ee_offset", "mass_lo", "mass_hi",
                     "com_lo", "com_hi", "inertia_lo", "inertia_hi", "q_lim",
                     "qd_lim", "u_lim", "link_box_centers", "link_box_halves",
                     "base_pos", "base_R"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.mass_lo <= 0) or np.any(self.inertia_lo <= 0):
            raise ValueError("interval masses and inertias must stay positive")
        if np.any(self.q_lim[:, 0] >= self.q_lim[:, 1]):
            raise ValueError("joint limits must be well ordered")
        norms = np.linalg.norm(self.axes, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("joint axes must be unit vectors")

    @property
    def n_q(self):
        return self.axes.shape[0]

    def nominal(self):
        """Midpoint masses, coms, and inertias."""
        return (0.5 * (self.mass_lo + self.mass_hi),
                0.5 * (self.com_lo + self.com_hi),
                0.5 * (self.inertia_lo + self.inertia_hi))

    def with_base(self, pos=None, R=None):
        return replace(self,
                       base_pos=self.base_pos if pos is None else np.asarray(pos, float),
                       base_R=self.base_R if R is None else np.asarray(R, float))

    def with_param_scale(self, rel):
        """Shrink or grow the parameter intervals about their midpoints."""
        m, c, i = self.nominal()
        return replace(self,
                       mass_lo=m - rel * (m - self.mass_lo), mass_hi=m + rel * (self.mass_hi - m),
                       com_lo=c - rel * (c - self.com_lo), com_hi=c + rel * (self.com_hi - c),
                       inertia_lo=i - rel * (i - self.inertia_lo),
                       inertia_hi=i + rel * (self.inertia_hi - i))


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd))):
            raise ValueError("joint state must be finite")


def _axis_rot(axis, q):
    c, s = np.cos(q), np.sin(q)
    ax = np.array([[0.0, -axis[2], axis[1]],
                   [axis[2], 0.0, -axis[0]],
                   [-axis[1], axis[0], 0.0]])
    return c * np.eye(3) + s * ax + (1.0 - c) * np.outer(axis, axis)


def forward_kinematics(model, q):
    """World-frame joint positions/orientations and the end-effector pose."""
    n = model.n_q
    p = np.empty((n, 3))
    R = np.empty((n, 3, 3))
    p_prev, R_prev = model.base_pos, model.base_R
    for j in range(n):
        p[j] = p_prev + R_prev @ model.offsets[j]
        R[j] = R_prev @ _axis_rot(model.axes[j], q[j])
        p_prev, R_prev = p[j], R[j]
    p_ee = p[-1] + R[-1] @ model.ee_offset
    return p, R, p_ee, R[-1]


def jacobian(model, q):
    """End-effector position Jacobian (3 x n)."""
    p, R, p_ee, _ = forward_kinematics(model, q)
    J = np.empty((3, model.n_q))
    for j in range(model.n_q):
        z = R[j] @ model.axes[j]
        J[:, j] = np.cross(z, p_ee - p[j])
    return J


def forward_occupancy(model, q):
    """Per-link oriented occupancy boxes (center, R, half-extents)."""
    p, R, _, _ = forward_kinematics(model, q)
    out = []
    for j in range(model.n_q):
        c = p[j] + R[j] @ model.link_box_centers[j]
        out.append((c, R[j], model.link_box_halves[j].copy()))
    return out


# ---------------------------------------------------------------------
# inverse dynamics


def _as_interval(x, n=None, dim=None):
    if isinstance(x, IntervalVector):
        return x.lo.copy(), x.hi.copy()
    x = np.asarray(x, dtype=float)
    return x.copy(), x.copy()


def _params_arrays(model, params):
    if params == "nominal":
        m, c, i = model.nominal()
        return m, m, c, c, i, i
    if params == "interval":
        return (model.mass_lo, model.mass_hi, model.com_lo, model.com_hi,
                model.inertia_lo, model.inertia_hi)
    m, c, i = params
    m = np.asarray(m, float)
    c = np.asarray(c, float)
    i = np.asarray(i, float)
    return m, m, c, c, i, i


def _kernel_call(model, q_iv, v_iv, a_iv, parr, f_iv, gravity):
    n = model.n_q
    a0 = model.base_R.T @ np.array([0.0, 0.0, _GRAV if gravity else 0.0])
    # world -> base rotation of the force interval (exact for boxes)
    fc = 0.5 * (f_iv[0] + f_iv[1])
    fr = 0.5 * (f_iv[1] - f_iv[0])
    fc_b = model.base_R.T @ fc
    fr_b = np.abs(model.base_R.T) @ fr
    ulo = np.empty(n)
    uhi = np.empty(n)
    rnea_kernel(model.axes, model.offsets, model.ee_offset, a0,
                q_iv[0], q_iv[1], v_iv[0], v_iv[1], a_iv[0], a_iv[1],
                parr[0], parr[1], parr[2], parr[3], parr[4], parr[5],
                fc_b - fr_b, fc_b + fr_b, ulo, uhi)
    return ulo, uhi


def rnea(model, q, qd, qd_aux, qdd, params="nominal", f_ext=None):
    """Torque enclosure/value of M qdd + C(q, qd) qd_aux + G - J^T f_ext.

    The Coriolis product uses the Christoffel-consistent factorization:
    because the Christoffel bilinear form is symmetric, C(q, v) w equals
    (h(v+w) - h(v) - h(w)) / 2 where h(v) is the quadratic velocity
    torque vector, which any correct inverse dynamics supplies.

    Inputs may be concrete arrays or IntervalVector; params is "nominal",
    "interval", or an explicit (masses, coms, inertias) sample.  Returns
    an ndarray when everything is concrete, else an IntervalVector.
    """
    interval_out = params == "interval" or any(
        isinstance(x, IntervalVector) for x in (q, qd, qd_aux, qdd, f_ext))
    q_iv = _as_interval(q)
    v_iv = _as_interval(qd)
    va_iv = _as_interval(qd_aux)
    a_iv = _as_interval(qdd)
    f_iv = _as_interval(np.zeros(3) if f_ext is None else f_ext)
    parr = _params_arrays(model, params)
    zero = (np.zeros(model.n_q), np.zeros(model.n_q))
    zf = (np.zeros(3), np.zeros(3))

    same_aux = (np.array_equal(v_iv[0], va_iv[0])
                and np.array_equal(v_iv[1], va_iv[1]))
    if same_aux:
        ulo, uhi = _kernel_call(model, q_iv, v_iv, a_iv, parr, f_iv, True)
    else:
        base_lo, base_hi = _kernel_call(model, q_iv, zero, a_iv, parr, f_iv, True)
        vs = (v_iv[0] + va_iv[0], v_iv[1] + va_iv[1])
        h1 = _kernel_call(model, q_iv, vs, zero, parr, zf, False)
        h2 = _kernel_call(model, q_iv, v_iv, zero, parr, zf, False)
        h3 = _kernel_call(model, q_iv, va_iv, zero, parr, zf, False)
        clo = 0.5 * (h1[0] - h2[1] - h3[1])
        chi = 0.5 * (h1[1] - h2[0] - h3[0])
        ulo, uhi = base_lo + clo, base_hi + chi
    if interval_out:
        return IntervalVector(ulo, uhi)
    return 0.5 * (ulo + uhi)


def mass_matrix(model, q, params="nominal"):
    n = model.n_q
    parr = _params_arrays(model, params if params != "interval" else "nominal")
    q_iv = _as_interval(q)
    zero = (np.zeros(n), np.zeros(n))
    zf = (np.zeros(3), np.zeros(3))
    M = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        ulo, uhi = _kernel_call(model, q_iv, zero, (e, e), parr, zf, False)
        M[:, i] = 0.5 * (ulo + uhi)
    return 0.5 * (M + M.T)


def forward_dynamics(model, q, qd, u, f_ext=None, params="nominal"):
    """Joint accelerations of the plant under applied torque u."""
    bias = rnea(model, q, qd, qd, np.zeros(model.n_q), params, f_ext)
    M = mass_matrix(model, q, params)
    return np.linalg.solve(M, np.asarray(u, dtype=float) - bias)


def gravity_torque(model, q, params="nominal"):
    z = np.zeros(model.n_q)
    return rnea(model, q, z, z, z, params, None)


# ---------------------------------------------------------------------
# polynomial-zonotope forward kinematics (planner support)


def _pz_const(v):
    return PolyZonotope.scalar(float(v))


def fk_chain_pz(model, q_pzs, trig_degree=5, max_gens=14):
    """FK with scalar-PZ joint angles.

    q_pzs: per-joint scalar PolyZonotope.  Returns a list of per-link
    dicts {"p": [3 scalar PZs], "R": 3x3 nested list of scalar PZs} plus
    the end-effector position PZs.  Intermediate products are order-
    reduced (containment-preserving).
    """
    n = model.n_q
    red = lambda z: z.reduce(max_gens, max_err_gens=max_gens) \
        if (z.n_dep > max_gens or z.n_err > max_gens) else z

    p_prev = [_pz_const(model.base_pos[i]) for i in range(3)]
    R_prev = [[_pz_const(model.base_R[i, j]) for j in range(3)] for i in range(3)]
    links = []
    for j in range(n):
        off = model.offsets[j]
        p_j = [red(p_prev[i] + (R_prev[i][0] * off[0] + R_prev[i][1] * off[1]
                                + R_prev[i][2] * off[2])) for i in range(3)]
        s = sin_pz(q_pzs[j], degree=trig_degree)
        c = cos_pz(q_pzs[j], degree=trig_degree)
        a = model.axes[j]
        A = np.outer(a, a)
        B = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
        C = np.eye(3) - A
        R_loc = [[_pz_const(A[r, cidx]) + s * B[r, cidx] + c * C[r, cidx]
                  for cidx in range(3)] for r in range(3)]
        R_j = [[red(R_prev[r][0] * R_loc[0][cidx]
                    + R_prev[r][1] * R_loc[1][cidx]
                    + R_prev[r][2] * R_loc[2][cidx])
                for cidx in range(3)] for r in range(3)]
        links.append({"p": p_j, "R": R_j})
        p_prev, R_prev = p_j, R_j
    ee = model.ee_offset
    p_ee = [red(p_prev[i] + (R_prev[i][0] * ee[0] + R_prev[i][1] * ee[1]
                             + R_prev[i][2] * ee[2])) for i in range(3)]
    return links, p_ee


# ---------------------------------------------------------------------
# default 7-DOF chain


def default_model(param_uncertainty=0.05):
    """Generic 7-DOF revolute chain at desk scale (config-overridable)."""
    axes = np.array([
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    offsets = np.array([
        [0.0, 0.0, 0.16],
        [0.0, 0.0, 0.13],
        [0.0, 0.0, 0.21],
        [0.0, 0.0, 0.21],
        [0.0, 0.0, 0.21],
        [0.0, 0.0, 0.10],
        [0.0, 0.0, 0.11],
    ])
    ee_offset = np.array([0.0, 0.0, 0.12])
    masses = np.array([3.0, 2.6, 2.2, 1.8, 1.2, 0.9, 0.5])
    next_off = np.vstack([offsets[1:], ee_offset[None, :]])
    coms = 0.5 * next_off
    inertias = []
    for m, off in zip(masses, next_off):
        l = max(np.linalg.norm(off), 0.08)
        r = 0.045
        ix = m * (3 * r * r + l * l) / 12.0
        inertias.append([ix, ix, 0.5 * m * r * r])
    inertias = np.maximum(np.array(inertias), 0.003)
    rel = param_uncertainty
    q_lim = np.tile(np.array([-2.9, 2.9]), (7, 1))
    box_centers = 0.5 * next_off
    box_halves = np.abs(0.5 * next_off) + np.array([0.055, 0.055, 0.02])
    return RobotModel(
        axes=axes, offsets=offsets, ee_offset=ee_offset,
        mass_lo=masses * (1 - rel), mass_hi=masses * (1 + rel),
        com_lo=coms - rel * 0.1, com_hi=coms + rel * 0.1,
        inertia_lo=inertias * (1 - rel), inertia_hi=inertias * (1 + rel),
        q_lim=q_lim,
        qd_lim=np.full(7, 1.75),
        u_lim=np.array([90.0, 90.0, 60.0, 60.0, 25.0, 25.0, 12.0]),
        link_box_centers=box_centers, link_box_halves=box_halves,
    )
