"""Numba kernels for interval Newton-Euler inverse dynamics.

Every quantity is carried as a (lo, hi) pair; concrete evaluation is the
degenerate case lo == hi, so the nominal and interval paths share one
implementation by construction.  All frames are link-local; gravity is
applied through the base-acceleration trick.
"""

import numpy as np
from numba import njit

TWO_PI = 2.0 * np.pi
HALF_PI = 0.5 * np.pi


@njit(cache=True)
def _imul(al, ah, bl, bh):
    p1 = al * bl
    p2 = al * bh
    p3 = ah * bl
    p4 = ah * bh
    lo = min(min(p1, p2), min(p3, p4))
    hi = max(max(p1, p2), max(p3, p4))
    return lo, hi


@njit(cache=True)
def _isin(lo, hi):
    if hi - lo >= TWO_PI:
        return -1.0, 1.0
    s1 = np.sin(lo)
    s2 = np.sin(hi)
    slo = min(s1, s2)
    shi = max(s1, s2)
    k = np.ceil((lo - HALF_PI) / TWO_PI)
    if HALF_PI + TWO_PI * k <= hi:
        shi = 1.0
    k = np.ceil((lo + HALF_PI) / TWO_PI)
    if -HALF_PI + TWO_PI * k <= hi:
        slo = -1.0
    return slo, shi


@njit(cache=True)
def _icos(lo, hi):
    return _isin(lo + HALF_PI, hi + HALF_PI)


@njit(cache=True)
def _ivec_zero(olo, ohi):
    for i in range(3):
        olo[i] = 0.0
        ohi[i] = 0.0


@njit(cache=True)
def _ivec_add(alo, ahi, blo, bhi, olo, ohi):
    for i in range(3):
        olo[i] = alo[i] + blo[i]
        ohi[i] = ahi[i] + bhi[i]


@njit(cache=True)
def _ivec_sub(alo, ahi, blo, bhi, olo, ohi):
    for i in range(3):
        olo[i] = alo[i] - bhi[i]
        ohi[i] = ahi[i] - blo[i]


@njit(cache=True)
def _ivec_cross(alo, ahi, blo, bhi, olo, ohi):
    # o = a x b, computed one component at a time into temporaries so the
    # output may not alias the inputs
    t0l, t0h = _imul(alo[1], ahi[1], blo[2], bhi[2])
    s0l, s0h = _imul(alo[2], ahi[2], blo[1], bhi[1])
    t1l, t1h = _imul(alo[2], ahi[2], blo[0], bhi[0])
    s1l, s1h = _imul(alo[0], ahi[0], blo[2], bhi[2])
    t2l, t2h = _imul(alo[0], ahi[0], blo[1], bhi[1])
    s2l, s2h = _imul(alo[1], ahi[1], blo[0], bhi[0])
    olo[0] = t0l - s0h
    ohi[0] = t0h - s0l
    olo[1] = t1l - s1h
    ohi[1] = t1h - s1l
    olo[2] = t2l - s2h
    ohi[2] = t2h - s2l


@njit(cache=True)
def _ivec_scale(sl, sh, vlo, vhi, olo, ohi):
    for i in range(3):
        olo[i], ohi[i] = _imul(sl, sh, vlo[i], vhi[i])


@njit(cache=True)
def _ivec_mul(alo, ahi, blo, bhi, olo, ohi):
    for i in range(3):
        olo[i], ohi[i] = _imul(alo[i], ahi[i], blo[i], bhi[i])


@njit(cache=True)
def _imatvec(Rlo, Rhi, vlo, vhi, olo, ohi):
    for i in range(3):
        accl = 0.0
        acch = 0.0
        for j in range(3):
            pl, ph = _imul(Rlo[i, j], Rhi[i, j], vlo[j], vhi[j])
            accl += pl
            acch += ph
        olo[i] = accl
        ohi[i] = acch


@njit(cache=True)
def _imatTvec(Rlo, Rhi, vlo, vhi, olo, ohi):
    for i in range(3):
        accl = 0.0
        acch = 0.0
        for j in range(3):
            pl, ph = _imul(Rlo[j, i], Rhi[j, i], vlo[j], vhi[j])
            accl += pl
            acch += ph
        olo[i] = accl
        ohi[i] = acch


@njit(cache=True)
def _imatmul(Alo, Ahi, Blo, Bhi, Olo, Ohi):
    for i in range(3):
        for j in range(3):
            accl = 0.0
            acch = 0.0
            for k in range(3):
                pl, ph = _imul(Alo[i, k], Ahi[i, k], Blo[k, j], Bhi[k, j])
                accl += pl
                acch += ph
            Olo[i, j] = accl
            Ohi[i, j] = acch


@njit(cache=True)
def _rot_axis_interval(axis, qlo, qhi, Rlo, Rhi):
    """R = a a^T + sin(q) [a]x + cos(q) (I - a a^T), entries affine in
    (sin, cos) so the interval entries are exact given the trig ranges."""
    sl, sh = _isin(qlo, qhi)
    cl, ch = _icos(qlo, qhi)
    ax, ay, az = axis[0], axis[1], axis[2]
    A = np.empty((3, 3))
    B = np.empty((3, 3))
    A[0, 0] = ax * ax
    A[0, 1] = ax * ay
    A[0, 2] = ax * az
    A[1, 0] = ay * ax
    A[1, 1] = ay * ay
    A[1, 2] = ay * az
    A[2, 0] = az * ax
    A[2, 1] = az * ay
    A[2, 2] = az * az
    B[0, 0] = 0.0
    B[0, 1] = -az
    B[0, 2] = ay
    B[1, 0] = az
    B[1, 1] = 0.0
    B[1, 2] = -ax
    B[2, 0] = -ay
    B[2, 1] = ax
    B[2, 2] = 0.0
    for i in range(3):
        for j in range(3):
            base = A[i, j]
            b = B[i, j]
            cc = (1.0 if i == j else 0.0) - A[i, j]
            lo = base
            hi = base
            if b >= 0.0:
                lo += b * sl
                hi += b * sh
            else:
                lo += b * sh
                hi += b * sl
            if cc >= 0.0:
                lo += cc * cl
                hi += cc * ch
            else:
                lo += cc * ch
                hi += cc * cl
            Rlo[i, j] = lo
            Rhi[i, j] = hi


@njit(cache=True)
def rnea_kernel(axes, offsets, ee_off,
                a0,
                qlo, qhi, vlo, vhi, alo, ahi,
                mlo, mhi, clo, chi, Ilo, Ihi,
                flo, fhi,
                ulo, uhi):
    """One-velocity interval RNEA.

    Returns (into ulo/uhi) the torque enclosure of
        M(q) qdd + C(q, qd) qd + G(q) - J(q)^T f_ext
    with gravity encoded in a0 (base linear acceleration, base frame)
    and f_ext given in the base frame.
    """
    n = axes.shape[0]

    R_lo = np.empty((n, 3, 3))
    R_hi = np.empty((n, 3, 3))
    F_lo = np.empty((n, 3))
    F_hi = np.empty((n, 3))
    N_lo = np.empty((n, 3))
    N_hi = np.empty((n, 3))

    w_pl = np.zeros(3)
    w_ph = np.zeros(3)
    al_pl = np.zeros(3)
    al_ph = np.zeros(3)
    aO_pl = a0.copy()
    aO_ph = a0.copy()

    Rc_lo = np.zeros((3, 3))
    Rc_hi = np.zeros((3, 3))
    for i in range(3):
        Rc_lo[i, i] = 1.0
        Rc_hi[i, i] = 1.0

    t1l = np.empty(3)
    t1h = np.empty(3)
    t2l = np.empty(3)
    t2h = np.empty(3)
    t3l = np.empty(3)
    t3h = np.empty(3)
    w_l = np.empty(3)
    w_h = np.empty(3)
    alp_l = np.empty(3)
    alp_h = np.empty(3)
    aO_l = np.empty(3)
    aO_h = np.empty(3)
    tmp_l = np.empty(3)
    tmp_h = np.empty(3)
    M_lo = np.empty((3, 3))
    M_hi = np.empty((3, 3))

    for j in range(n):
        _rot_axis_interval(axes[j], qlo[j], qhi[j], R_lo[j], R_hi[j])
        _imatmul(Rc_lo, Rc_hi, R_lo[j], R_hi[j], M_lo, M_hi)
        for i in range(3):
            for k in range(3):
                Rc_lo[i, k] = M_lo[i, k]
                Rc_hi[i, k] = M_hi[i, k]

        axis = axes[j]
        # tmp = R^T w_parent
        _imatTvec(R_lo[j], R_hi[j], w_pl, w_ph, tmp_l, tmp_h)
        # w = tmp + qd * axis
        for i in range(3):
            pl, ph = _imul(vlo[j], vhi[j], axis[i], axis[i])
            w_l[i] = tmp_l[i] + pl
            w_h[i] = tmp_h[i] + ph
        # alpha = R^T alpha_p + tmp x (qd*axis) + qdd*axis
        _imatTvec(R_lo[j], R_hi[j], al_pl, al_ph, t1l, t1h)
        for i in range(3):
            pl, ph = _imul(vlo[j], vhi[j], axis[i], axis[i])
            t2l[i] = pl
            t2h[i] = ph
        _ivec_cross(tmp_l, tmp_h, t2l, t2h, t3l, t3h)
        for i in range(3):
            pl, ph = _imul(alo[j], ahi[j], axis[i], axis[i])
            alp_l[i] = t1l[i] + t3l[i] + pl
            alp_h[i] = t1h[i] + t3h[i] + ph
        # aO = R^T (aO_p + alpha_p x d + w_p x (w_p x d))
        d = offsets[j]
        dl = np.empty(3)
        dh = np.empty(3)
        for i in range(3):
            dl[i] = d[i]
            dh[i] = d[i]
        _ivec_cross(al_pl, al_ph, dl, dh, t1l, t1h)
        _ivec_cross(w_pl, w_ph, dl, dh, t2l, t2h)
        _ivec_cross(w_pl, w_ph, t2l, t2h, t3l, t3h)
        for i in range(3):
            t1l[i] = aO_pl[i] + t1l[i] + t3l[i]
            t1h[i] = aO_ph[i] + t1h[i] + t3h[i]
        _imatTvec(R_lo[j], R_hi[j], t1l, t1h, aO_l, aO_h)
        # a_com = aO + alpha x c + w x (w x c)
        _ivec_cross(alp_l, alp_h, clo[j], chi[j], t1l, t1h)
        _ivec_cross(w_l, w_h, clo[j], chi[j], t2l, t2h)
        _ivec_cross(w_l, w_h, t2l, t2h, t3l, t3h)
        for i in range(3):
            t1l[i] = aO_l[i] + t1l[i] + t3l[i]
            t1h[i] = aO_h[i] + t1h[i] + t3h[i]
        _ivec_scale(mlo[j], mhi[j], t1l, t1h, F_lo[j], F_hi[j])
        # N = I.alpha + w x (I.w)   (diagonal inertia)
        for i in range(3):
            t1l[i], t1h[i] = _imul(Ilo[j, i], Ihi[j, i], alp_l[i], alp_h[i])
            t2l[i], t2h[i] = _imul(Ilo[j, i], Ihi[j, i], w_l[i], w_h[i])
        _ivec_cross(w_l, w_h, t2l, t2h, t3l, t3h)
        for i in range(3):
            N_lo[j, i] = t1l[i] + t3l[i]
            N_hi[j, i] = t1h[i] + t3h[i]

        for i in range(3):
            w_pl[i] = w_l[i]
            w_ph[i] = w_h[i]
            al_pl[i] = alp_l[i]
            al_ph[i] = alp_h[i]
            aO_pl[i] = aO_l[i]
            aO_ph[i] = aO_h[i]

    # external tip force rotated into the last link frame
    fl_l = np.empty(3)
    fl_h = np.empty(3)
    _imatTvec(Rc_lo, Rc_hi, flo, fhi, fl_l, fl_h)

    f_l = np.empty(3)
    f_h = np.empty(3)
    n_l = np.empty(3)
    n_h = np.empty(3)
    for j in range(n - 1, -1, -1):
        if j == n - 1:
            for i in range(3):
                f_l[i] = F_lo[j, i] - fl_h[i]
                f_h[i] = F_hi[j, i] - fl_l[i]
            eel = np.empty(3)
            eeh = np.empty(3)
            for i in range(3):
                eel[i] = ee_off[i]
                eeh[i] = ee_off[i]
            _ivec_cross(eel, eeh, fl_l, fl_h, t1l, t1h)
            _ivec_cross(clo[j], chi[j], F_lo[j], F_hi[j], t2l, t2h)
            for i in range(3):
                n_l[i] = N_lo[j, i] + t2l[i] - t1h[i]
                n_h[i] = N_hi[j, i] + t2h[i] - t1l[i]
        else:
            # child contributions rotated into this frame
            _imatvec(R_lo[j + 1], R_hi[j + 1], f_l, f_h, t1l, t1h)
            _imatvec(R_lo[j + 1], R_hi[j + 1], n_l, n_h, t2l, t2h)
            d = offsets[j + 1]
            dl = np.empty(3)
            dh = np.empty(3)
            for i in range(3):
                dl[i] = d[i]
                dh[i] = d[i]
            _ivec_cross(dl, dh, t1l, t1h, t3l, t3h)
            _ivec_cross(clo[j], chi[j], F_lo[j], F_hi[j], tmp_l, tmp_h)
            for i in range(3):
                n_l[i] = N_lo[j, i] + tmp_l[i] + t2l[i] + t3l[i]
                n_h[i] = N_hi[j, i] + tmp_h[i] + t2h[i] + t3h[i]
                f_l[i] = F_lo[j, i] + t1l[i]
                f_h[i] = F_hi[j, i] + t1h[i]

        axis = axes[j]
        accl = 0.0
        acch = 0.0
        for i in range(3):
            pl, ph = _imul(n_l[i], n_h[i], axis[i], axis[i])
            accl += pl
            acch += ph
        ulo[j] = accl
        uhi[j] = acch
