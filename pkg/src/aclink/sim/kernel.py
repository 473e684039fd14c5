"""
Compiled inner loop of the switching model.

The state vector is::

    0 v_L   1 i_M   2..4 v_c(abc)   5..7 i_g(abc)
    8 charge of the running conduction interval
    9 input energy   10 output energy   11..13 delivered charge per phase
    14..16 integral of v_c   17..19 integral of i_g (multisampled averages)

Within one call the link dynamics kind and the exit predicates are fixed;
the call returns when a predicate crosses zero (localised by bisection) or
``t_end`` is reached.
"""
import math

import numpy as np
from numba import njit

NX = 20

# dynamics kinds
RES, INPUT, OUTPUT = 0, 1, 2

# predicate kinds
P_NONE = 0
P_V_INPUT = 1
P_V_PAIR_MIN = 2
P_V_PAIR_SECOND = 3
P_CHARGE = 4
P_CHARGE_OR_ENERGY = 5
P_ENERGY = 6
P_CURRENT = 7
P_PAIR_CROSS = 8

# prm layout
I_LM, I_CL, I_N, I_VIN, I_LF, I_CF, I_RF, I_VPK, I_W, I_PH0 = range(10)

# status codes
REACHED_END, FIRED_MAIN, FIRED_GUARD, NONFINITE = 0, 1, 2, 3

_SH = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])


@njit(cache=True)
def _deriv(x, t, kind, pol, idx, prm, dx):
    L = prm[I_LM]
    C = prm[I_CL]
    n = prm[I_N]
    Lf = prm[I_LF]
    Cf = prm[I_CF]
    rf = prm[I_RF]
    ang = prm[I_W] * t + prm[I_PH0]
    pa = idx[0]
    pb = idx[1]
    iv = np.zeros(3)
    v = x[0]
    i = x[1]
    if kind == RES:
        dx[1] = v / L
        dx[8] = 0.0
        dx[9] = 0.0
    elif kind == INPUT:
        dx[1] = v / L
        dx[8] = pol * i
        dx[9] = prm[I_VIN] * pol * i
    else:
        dx[1] = -pol * n * (x[2 + pa] - x[2 + pb]) / L
        # the clamped link capacitor follows the pair voltage, so its
        # displacement current is shared with the port
        r = n * n * C / Cf
        io = (n * pol * i + r * (x[5 + pa] - x[5 + pb])) / (1.0 + 2.0 * r)
        dx[8] = io
        dx[9] = 0.0
        iv[pa] += io
        iv[pb] -= io
    vk = prm[I_VPK]
    for k in range(3):
        dx[11 + k] = iv[k]
        dx[2 + k] = (iv[k] - x[5 + k]) / Cf
        dx[5 + k] = (x[2 + k] - vk * math.cos(ang + _SH[k]) - rf * x[5 + k]) / Lf
        dx[14 + k] = x[2 + k]
        dx[17 + k] = x[5 + k]
    dx[10] = x[2] * iv[0] + x[3] * iv[1] + x[4] * iv[2]
    if kind == RES:
        dx[0] = -i / C
    elif kind == INPUT:
        dx[0] = 0.0
    else:
        dx[0] = -pol * n * (dx[2 + pa] - dx[2 + pb])


@njit(cache=True)
def _rk4(x, t, h, kind, pol, idx, prm, out, k1, k2, k3, k4, tmp):
    _deriv(x, t, kind, pol, idx, prm, k1)
    for j in range(NX):
        tmp[j] = x[j] + 0.5 * h * k1[j]
    _deriv(tmp, t + 0.5 * h, kind, pol, idx, prm, k2)
    for j in range(NX):
        tmp[j] = x[j] + 0.5 * h * k2[j]
    _deriv(tmp, t + 0.5 * h, kind, pol, idx, prm, k3)
    for j in range(NX):
        tmp[j] = x[j] + h * k3[j]
    _deriv(tmp, t + h, kind, pol, idx, prm, k4)
    for j in range(NX):
        out[j] = x[j] + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
    if kind == OUTPUT:
        out[0] = -pol * prm[I_N] * (out[2 + idx[0]] - out[2 + idx[1]])
    elif kind == INPUT:
        out[0] = x[0]


@njit(cache=True)
def predicate(kind, x, pol, idx, ftgt, prm):
    if kind == P_V_INPUT:
        return pol * x[0] - prm[I_VIN]
    if kind == P_V_PAIR_MIN:
        v1 = x[2 + idx[2]] - x[2 + idx[3]]
        v2 = x[2 + idx[4]] - x[2 + idx[5]]
        return pol * x[0] + prm[I_N] * min(v1, v2)
    if kind == P_V_PAIR_SECOND:
        v2 = x[2 + idx[4]] - x[2 + idx[5]]
        return pol * x[0] + prm[I_N] * v2
    energy = 0.5 * prm[I_LM] * x[1] * x[1] + 0.5 * prm[I_CL] * x[0] * x[0]
    if kind == P_CHARGE:
        return ftgt[0] - x[8]
    # discharge intervals also end if the link current dies out
    if kind == P_CHARGE_OR_ENERGY:
        return min(ftgt[0] - x[8], energy - ftgt[1], pol * x[1])
    if kind == P_ENERGY:
        return min(energy - ftgt[1], pol * x[1])
    if kind == P_CURRENT:
        return pol * x[1]
    if kind == P_PAIR_CROSS:
        v1 = x[2 + idx[0]] - x[2 + idx[1]]
        v2 = x[2 + idx[4]] - x[2 + idx[5]]
        return v2 - v1 + ftgt[2]
    return 1.0


@njit(cache=True)
def advance(x, t, t_end, dt, tol, kind, pol, pred1, pred2, idx, ftgt, prm):
    """
    Integrate ``x`` in place from ``t`` towards ``t_end``.

    Returns ``(status, t)``.  A main predicate already at or below zero fires
    immediately; the guard predicate only fires on a downward crossing.
    """
    k1 = np.empty(NX)
    k2 = np.empty(NX)
    k3 = np.empty(NX)
    k4 = np.empty(NX)
    tmp = np.empty(NX)
    xn = np.empty(NX)
    xm = np.empty(NX)
    g1 = predicate(pred1, x, pol, idx, ftgt, prm)
    if pred1 != P_NONE and g1 <= 0.0:
        return FIRED_MAIN, t
    guard = pred2 != P_NONE
    if guard:
        guard = predicate(pred2, x, pol, idx, ftgt, prm) > 0.0
    while t < t_end:
        h = dt
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        _rk4(x, t, h, kind, pol, idx, prm, xn, k1, k2, k3, k4, tmp)
        for j in range(NX):
            if not math.isfinite(xn[j]):
                return NONFINITE, t
        f1 = predicate(pred1, xn, pol, idx, ftgt, prm) <= 0.0 and pred1 != P_NONE
        f2 = guard and predicate(pred2, xn, pol, idx, ftgt, prm) <= 0.0
        if f1 or f2:
            lo = 0.0
            hi = h
            while hi - lo > tol:
                mid = 0.5 * (lo + hi)
                _rk4(x, t, mid, kind, pol, idx, prm, xm, k1, k2, k3, k4, tmp)
                m1 = pred1 != P_NONE and predicate(pred1, xm, pol, idx, ftgt, prm) <= 0.0
                m2 = guard and predicate(pred2, xm, pol, idx, ftgt, prm) <= 0.0
                if m1 or m2:
                    hi = mid
                    f1 = m1
                    f2 = m2
                else:
                    lo = mid
            _rk4(x, t, hi, kind, pol, idx, prm, xn, k1, k2, k3, k4, tmp)
            for j in range(NX):
                x[j] = xn[j]
            t = t + hi
            if f1:
                return FIRED_MAIN, t
            return FIRED_GUARD, t
        for j in range(NX):
            x[j] = xn[j]
        if last:
            t = t_end
        else:
            t = t + h
    return REACHED_END, t
