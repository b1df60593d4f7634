"""Numba kernel for the chain integrator: one semi-implicit step with
stretch/bend springs, gravity, damping, and penalty contact.  Mirrors
the force model documented in dlo.py."""

import numpy as np
from numba import njit

FAULT_NONE = 0
FAULT_NAN = 1
FAULT_LENGTH = 2

_FRICTION_VEL_EPS = 1e-2


@njit(cache=True)
def dlo_step_kernel(nodes, vels, grip_next, anchor,
                    rest_len, node_mass, k_stretch, k_bend,
                    c_stretch, c_air, k_contact, c_contact, friction,
                    gravity, dt, ground_z,
                    has_obstacle, obs_center, obs_R, obs_half,
                    tension_out):
    n = nodes.shape[0]
    F = np.zeros((n, 3))

    # boundary motion is visible to the dampers during this step
    for d in range(3):
        vels[0, d] = (grip_next[d] - nodes[0, d]) / dt
        vels[n - 1, d] = 0.0

    # stretch springs + along-link dampers
    for i in range(n - 1):
        dx = nodes[i + 1, 0] - nodes[i, 0]
        dy = nodes[i + 1, 1] - nodes[i, 1]
        dz = nodes[i + 1, 2] - nodes[i, 2]
        ln = np.sqrt(dx * dx + dy * dy + dz * dz)
        if ln < 1e-12:
            return FAULT_LENGTH
        ux, uy, uz = dx / ln, dy / ln, dz / ln
        rvx = vels[i + 1, 0] - vels[i, 0]
        rvy = vels[i + 1, 1] - vels[i, 1]
        rvz = vels[i + 1, 2] - vels[i, 2]
        rel = rvx * ux + rvy * uy + rvz * uz
        mag = k_stretch * (ln - rest_len) + c_stretch * rel
        F[i, 0] += mag * ux
        F[i, 1] += mag * uy
        F[i, 2] += mag * uz
        F[i + 1, 0] -= mag * ux
        F[i + 1, 1] -= mag * uy
        F[i + 1, 2] -= mag * uz

    # bending: gradient of k_bend * (1 - cos(theta_i)) at interior nodes
    for i in range(1, n - 1):
        ax = nodes[i, 0] - nodes[i - 1, 0]
        ay = nodes[i, 1] - nodes[i - 1, 1]
        az = nodes[i, 2] - nodes[i - 1, 2]
        bx = nodes[i + 1, 0] - nodes[i, 0]
        by = nodes[i + 1, 1] - nodes[i, 1]
        bz = nodes[i + 1, 2] - nodes[i, 2]
        la = np.sqrt(ax * ax + ay * ay + az * az)
        lb = np.sqrt(bx * bx + by * by + bz * bz)
        if la < 1e-12 or lb < 1e-12:
            return FAULT_LENGTH
        uax, uay, uaz = ax / la, ay / la, az / la
        ubx, uby, ubz = bx / lb, by / lb, bz / lb
        ca = uax * ubx + uay * uby + uaz * ubz
        gax = -(ubx - ca * uax) / la
        gay = -(uby - ca * uay) / la
        gaz = -(ubz - ca * uaz) / la
        gbx = (uax - ca * ubx) / lb
        gby = (uay - ca * uby) / lb
        gbz = (uaz - ca * ubz) / lb
        F[i - 1, 0] += k_bend * gax
        F[i - 1, 1] += k_bend * gay
        F[i - 1, 2] += k_bend * gaz
        F[i + 1, 0] += k_bend * gbx
        F[i + 1, 1] += k_bend * gby
        F[i + 1, 2] += k_bend * gbz
        F[i, 0] += -k_bend * (gax + gbx)
        F[i, 1] += -k_bend * (gay + gby)
        F[i, 2] += -k_bend * (gaz + gbz)

    # contact, gravity, air drag
    for i in range(n):
        if has_obstacle:
            px = nodes[i, 0] - obs_center[0]
            py = nodes[i, 1] - obs_center[1]
            pz = nodes[i, 2] - obs_center[2]
            lx = obs_R[0, 0] * px + obs_R[1, 0] * py + obs_R[2, 0] * pz
            ly = obs_R[0, 1] * px + obs_R[1, 1] * py + obs_R[2, 1] * pz
            lz = obs_R[0, 2] * px + obs_R[1, 2] * py + obs_R[2, 2] * pz
            q0 = abs(lx) - obs_half[0]
            q1 = abs(ly) - obs_half[1]
            q2 = abs(lz) - obs_half[2]
            qm = max(q0, max(q1, q2))
            if qm < 0.0:
                if q0 >= q1 and q0 >= q2:
                    axi = 0
                    sgn = 1.0 if lx >= 0.0 else -1.0
                elif q1 >= q2:
                    axi = 1
                    sgn = 1.0 if ly >= 0.0 else -1.0
                else:
                    axi = 2
                    sgn = 1.0 if lz >= 0.0 else -1.0
                nx = sgn * obs_R[0, axi]
                ny = sgn * obs_R[1, axi]
                nz = sgn * obs_R[2, axi]
                _penalty(F, vels, i, nx, ny, nz, -qm,
                         k_contact, c_contact, friction)
        depth = ground_z - nodes[i, 2]
        if depth > 0.0:
            _penalty(F, vels, i, 0.0, 0.0, 1.0, depth,
                     k_contact, c_contact, friction)
        F[i, 2] -= node_mass * gravity
        F[i, 0] -= c_air * vels[i, 0]
        F[i, 1] -= c_air * vels[i, 1]
        F[i, 2] -= c_air * vels[i, 2]

    # semi-implicit update of the interior, then pin the boundaries
    for i in range(1, n - 1):
        for d in range(3):
            vels[i, d] += (dt / node_mass) * F[i, d]
            nodes[i, d] += dt * vels[i, d]
    for d in range(3):
        nodes[0, d] = grip_next[d]
        nodes[n - 1, d] = anchor[d]
        vels[n - 1, d] = 0.0

    # tension: spring + damper force of link (0,1) on the held node
    dx = nodes[1, 0] - nodes[0, 0]
    dy = nodes[1, 1] - nodes[0, 1]
    dz = nodes[1, 2] - nodes[0, 2]
    ln = np.sqrt(dx * dx + dy * dy + dz * dz)
    if ln < 1e-12:
        return FAULT_LENGTH
    ux, uy, uz = dx / ln, dy / ln, dz / ln
    rel = ((vels[1, 0] - vels[0, 0]) * ux + (vels[1, 1] - vels[0, 1]) * uy
           + (vels[1, 2] - vels[0, 2]) * uz)
    mag = k_stretch * (ln - rest_len) + c_stretch * rel
    tension_out[0] = mag * ux
    tension_out[1] = mag * uy
    tension_out[2] = mag * uz

    # fault checks
    for i in range(n):
        for d in range(3):
            if not np.isfinite(nodes[i, d]):
                return FAULT_NAN
    for i in range(n - 1):
        dx = nodes[i + 1, 0] - nodes[i, 0]
        dy = nodes[i + 1, 1] - nodes[i, 1]
        dz = nodes[i + 1, 2] - nodes[i, 2]
        ln = np.sqrt(dx * dx + dy * dy + dz * dz)
        if ln < 0.5 * rest_len or ln > 2.0 * rest_len:
            return FAULT_LENGTH
    return FAULT_NONE


@njit(cache=True, inline="always")
def _penalty(F, vels, i, nx, ny, nz, depth, k_contact, c_contact, friction):
    vn = vels[i, 0] * nx + vels[i, 1] * ny + vels[i, 2] * nz
    fn = k_contact * depth - c_contact * vn
    if fn < 0.0:
        fn = 0.0
    vtx = vels[i, 0] - vn * nx
    vty = vels[i, 1] - vn * ny
    vtz = vels[i, 2] - vn * nz
    vt = np.sqrt(vtx * vtx + vty * vty + vtz * vtz)
    scale = friction * fn / np.sqrt(vt * vt + _FRICTION_VEL_EPS * _FRICTION_VEL_EPS)
    F[i, 0] += fn * nx - scale * vtx
    F[i, 1] += fn * ny - scale * vty
    F[i, 2] += fn * nz - scale * vtz
