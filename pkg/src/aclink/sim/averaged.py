"""
Averaged model: the converter becomes a controlled current source behind a
Padé-realised delay of half the switching period.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy import signal

from .. import acside
from ..control import Controller
from ..errors import SimulationError
from ..tfcore import make_pade_delay
from .results import EventLog, SimResult, Trace

_SH = acside.SHIFTS


def delay_state_space(Td):
    """``(A, B, C, D)`` of the Padé delay, or ``None`` for ``Td == 0``."""
    if Td == 0.0:
        return None
    tf = make_pade_delay(Td)
    return signal.tf2ss(tf.num.coeffs[::-1], tf.den.coeffs[::-1])


class _Plant:
    """Filter, grid and per-phase delay states as one vector."""

    def __init__(self, cfg):
        self.fp, self.gp = cfg.filter, cfg.grid
        Td = 0.0 if math.isinf(cfg.f_sw_hz) else 0.5 / cfg.f_sw_hz
        self.ss = delay_state_space(Td)
        self.nz = 0 if self.ss is None else self.ss[0].shape[0]

    def output(self, x, u):
        if self.ss is None:
            return u
        _, _, C, D = self.ss
        z = x[6:].reshape(3, self.nz)
        return z @ C[0] + D[0, 0] * u

    def deriv(self, t, x, u):
        fp = self.fp
        v_c, i_g = x[0:3], x[3:6]
        i_inv = self.output(x, u)
        v_g = self.gp.v_phase_peak * np.cos(self.gp.angle(t) + _SH)
        dx = np.empty_like(x)
        dx[0:3] = (i_inv - i_g) / fp.C
        dx[3:6] = (v_c - v_g - fp.r * i_g) / fp.L
        if self.ss is not None:
            A, B, _, _ = self.ss
            z = x[6:].reshape(3, self.nz)
            dx[6:] = (z @ A.T + np.outer(u, B[:, 0])).ravel()
        return dx

    def rk4(self, t, x, u, h):
        k1 = self.deriv(t, x, u)
        k2 = self.deriv(t + 0.5 * h, x + 0.5 * h * k1, u)
        k3 = self.deriv(t + 0.5 * h, x + 0.5 * h * k2, u)
        k4 = self.deriv(t + h, x + h * k3, u)
        return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def run_averaged(cfg):
    """
    Simulate the averaged model.

    The controller is sampled every ``dt_averaged`` and its output held in
    between; the trace uses the same sampling grid as the switching model.
    ``v_link``, ``i_mag`` are NaN and ``mode`` is 0 in the trace.
    """
    if cfg.model != "averaged":
        cfg = replace(cfg, model="averaged")
    plant = _Plant(cfg)
    gp = cfg.grid
    x = np.zeros(6 + 3 * plant.nz)
    if cfg.init == "steady":
        st = acside.steady_state(0.0, gp, cfg.filter)
        x[0:3], x[3:6] = st.v_c, st.i_g
    trace_dt = cfg.trace_dt
    n_samples = int(math.floor(cfg.t_stop / trace_dt + 1e-9)) + 1
    # controller period: the largest divisor of the trace step not above dt_averaged
    sub = max(1, int(math.ceil(trace_dt / cfg.dt_averaged - 1e-9)))
    h = trace_dt / sub
    # the first sample is taken at t = 0, one control period after the
    # PLL's reference instant
    ctl = Controller(cfg.control, gp, cfg.converter.v_in, theta0=gp.angle(-h))
    if cfg.prelocked:
        ctl.lock.locked = True
    rows = []
    u = np.zeros(3)
    t_latch = 0.0
    for k in range(n_samples):
        t = k * trace_dt
        th = ctl.angle_at(t, t_latch) % (2.0 * math.pi)
        i_dq = _park(x[3:6], th)
        ref = cfg.scenario.ref(t)
        rows.append((t, math.nan, math.nan, 0.0, *x[3:6], *x[0:3],
                     i_dq[1], i_dq[0], ref.q, ref.d, th))
        if k == n_samples - 1:
            break
        for j in range(sub):
            tj = t + j * h
            v_g = gp.v_phase_peak * np.cos(gp.angle(tj) + _SH)
            out = ctl.step(h, v_g, x[0:3].copy(), x[3:6].copy(), cfg.scenario.ref(tj))
            t_latch = tj
            u = np.asarray(out.i_abc_ref, dtype=float)
            x = plant.rk4(tj, x, u, h)
        if not np.all(np.isfinite(x)):
            raise SimulationError("non-finite state in averaged model", {"t": t})
    stats = {"latches": (n_samples - 1) * sub, "controller_enabled": ctl.enabled,
             "delay_s": 0.0 if math.isinf(cfg.f_sw_hz) else 0.5 / cfg.f_sw_hz}
    return SimResult(Trace(np.array(rows)), EventLog(), [], cfg, stats)


def _park(x, th):
    s = np.sin(th + _SH)
    c = np.cos(th + _SH)
    return (2.0 / 3.0) * float(x @ s), (2.0 / 3.0) * float(x @ c)
