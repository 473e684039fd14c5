"""
Synchronous-frame control: Park transforms, SRF-PLL, PI current loops and
the two active-damping variants.

Transform convention: amplitude invariant with the q axis on the grid
voltage vector, so at lock ``v_d = 0``, ``v_q`` equals the phase peak,
``i_q`` carries active power and ``p = 1.5 (v_d i_d + v_q i_q)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import DomainError

log = logging.getLogger(__name__)

SHIFTS = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])
TWO_PI = 2.0 * np.pi


class DqPair(NamedTuple):
    d: float
    q: float


def abc_to_dq(x_abc, theta):
    x = np.asarray(x_abc, dtype=float)
    ang = theta + SHIFTS
    d = (2.0 / 3.0) * float(np.dot(x, np.sin(ang)))
    q = (2.0 / 3.0) * float(np.dot(x, np.cos(ang)))
    return DqPair(d, q)


def dq_to_abc(x, theta):
    ang = theta + SHIFTS
    return x[0] * np.sin(ang) + x[1] * np.cos(ang)


# %% PI

@dataclass(frozen=True)
class PiState:
    kp: float
    ki: float
    out_limit: float = np.inf
    integral: float = 0.0


def pi_step(err, dt, st):
    """
    One PI update with conditional-integration anti-windup.

    The integral advances by ``err * dt`` unless that would push an already
    saturated output further into saturation.
    """
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt!r}")
    integral = st.integral + err * dt
    raw = st.kp * err + st.ki * integral
    if abs(raw) > st.out_limit and np.sign(err) == np.sign(raw):
        integral = st.integral
    if st.ki > 0 and abs(st.ki * integral) > st.out_limit:
        integral = np.sign(integral) * st.out_limit / st.ki
    out = min(max(raw, -st.out_limit), st.out_limit)
    return out, replace(st, integral=integral)


# %% PLL

@dataclass(frozen=True)
class PllState:
    theta: float
    omega: float
    pi: PiState
    omega_nominal: float = TWO_PI * 60.0


def pll_gains(bw_hz, zeta=np.sqrt(0.5)):
    """(kp, ki) placing the linearised PLL at natural frequency ``bw_hz``."""
    wn = TWO_PI * bw_hz
    return 2.0 * zeta * wn, wn * wn


def make_pll(f_nominal=60.0, bw_hz=20.0, theta0=0.0):
    kp, ki = pll_gains(bw_hz)
    w0 = TWO_PI * f_nominal
    return PllState(theta=theta0 % TWO_PI, omega=w0,
                    pi=PiState(kp, ki, out_limit=0.2 * w0), omega_nominal=w0)


def pll_step(v_abc, dt, st):
    """
    Synchronous-frame PLL: regulate the d-axis voltage to zero.

    The error is ``-v_d`` normalised by the voltage magnitude, which is the
    sine of the angle error.
    """
    v = abc_to_dq(v_abc, st.theta)
    mag = max(np.hypot(v.d, v.q), 1e-9)
    out, pi = pi_step(-v.d / mag, dt, st.pi)
    omega = st.omega_nominal + out
    theta = (st.theta + omega * dt) % TWO_PI
    return PllState(theta, omega, pi, st.omega_nominal)


@dataclass
class LockDetector:
    """Latches once ``|v_d| / |v_q|`` stays below ``ratio`` for ``hold`` seconds."""

    ratio: float = 0.02
    hold: float = 2.0 / 60.0
    elapsed: float = 0.0
    locked: bool = False

    def update(self, v_dq, dt):
        if self.locked:
            return True
        if abs(v_dq.d) < self.ratio * abs(v_dq.q):
            self.elapsed += dt
        else:
            self.elapsed = 0.0
        if self.elapsed >= self.hold:
            self.locked = True
        return self.locked


# %% Active damping

VARIANTS = {"cap": "cap", "capacitor": "cap", "capacitor-feedback": "cap",
            "ind": "ind", "inductor": "ind", "inductor-feedback": "ind",
            "none": "none"}


@dataclass(frozen=True)
class DampingConfig:
    """
    ``hpf_state`` is ``(x_prev_d, x_prev_q, y_prev_d, y_prev_q)`` or ``None``
    before the first sample.
    """

    variant: str = "cap"
    k: float = 0.2
    f_c: float = 160.0
    hpf_state: tuple = None

    def __post_init__(self):
        v = VARIANTS.get(self.variant)
        if v is None:
            raise DomainError(f"unknown damping variant {self.variant!r}")
        object.__setattr__(self, "variant", v)
        if v != "none" and not self.k > 0:
            raise DomainError(f"damping factor k must be > 0, got {self.k!r}")
        if v == "cap" and not self.f_c > 0:
            raise DomainError(f"HPF corner must be > 0, got {self.f_c!r}")


def damping_step(v_c_dq, v_g_dq, dt, cfg):
    """
    Damping correction to subtract from the dq current reference.

    The capacitor variant high-passes the capacitor voltage (bilinear
    discretisation at the call rate, filter memory seeded with the first
    sample); the inductor variant uses ``v_c - v_g`` unfiltered.
    """
    if not dt > 0:
        raise DomainError(f"dt must be > 0, got {dt!r}")
    if cfg.variant == "none":
        return DqPair(0.0, 0.0), cfg
    if cfg.variant == "ind":
        return DqPair(cfg.k * (v_c_dq[0] - v_g_dq[0]),
                      cfg.k * (v_c_dq[1] - v_g_dq[1])), cfg
    xd, xq = v_c_dq
    if cfg.hpf_state is None:
        pxd, pxq, pyd, pyq = xd, xq, 0.0, 0.0
    else:
        pxd, pxq, pyd, pyq = cfg.hpf_state
    a = 2.0 / (2.0 + TWO_PI * cfg.f_c * dt)
    yd = a * (pyd + xd - pxd)
    yq = a * (pyq + xq - pxq)
    return DqPair(cfg.k * yd, cfg.k * yq), replace(cfg, hpf_state=(xd, xq, yd, yq))


# %% Current loop

class ControlOutput(NamedTuple):
    i_abc_ref: np.ndarray
    i_dq_cmd: DqPair
    i_in_ref: float
    pi_states: tuple


def clamp_reference(ref, limit, warn=True):
    mag = np.hypot(ref[0], ref[1])
    if mag > limit:
        if warn:
            log.warning("current reference |%.3f| A exceeds %.3f A; clamped", mag, limit)
        s = limit / mag
        return DqPair(ref[0] * s, ref[1] * s)
    return DqPair(float(ref[0]), float(ref[1]))


def current_control_step(i_g_dq, ref, damping, dt, states, theta=0.0,
                         v_c_dq=(0.0, 0.0), v_in=150.0, ref_limit=4.5, warn=True):
    """
    PI regulation of the grid current in dq.

    The PI outputs minus the damping correction form the inverter current
    command, which is rotated back to abc.  The input current reference
    follows from lossless power balance at the capacitor voltage.
    """
    ref = clamp_reference(ref, ref_limit, warn)
    pi_d, pi_q = states
    od, pi_d = pi_step(ref[0] - i_g_dq[0], dt, pi_d)
    oq, pi_q = pi_step(ref[1] - i_g_dq[1], dt, pi_q)
    cmd = DqPair(od - damping[0], oq - damping[1])
    i_abc = dq_to_abc(cmd, theta)
    power = 1.5 * (v_c_dq[0] * cmd.d + v_c_dq[1] * cmd.q)
    i_in = max(power, 0.0) / v_in
    return ControlOutput(i_abc, cmd, i_in, (pi_d, pi_q))


@dataclass
class ControllerSettings:
    kp: float = 0.2
    ki: float = 800.0
    out_limit: float = 4.5
    damping: str = "cap"
    k_damp: float = 0.2
    hpf_hz: float = 160.0
    pll_bw_hz: float = 20.0
    lock_ratio: float = 0.02
    lock_cycles: float = 2.0


class Controller:
    """
    Sampled control stack advanced once per latch instant.

    Current and damping loops stay off (zero command) until the PLL lock
    detector latches.
    """

    def __init__(self, settings, grid, v_in, theta0=0.0):
        s = settings
        self.settings = s
        self.v_in = v_in
        self.pll = make_pll(grid.f_grid, s.pll_bw_hz, theta0)
        self.lock = LockDetector(s.lock_ratio, s.lock_cycles / grid.f_grid)
        self.pi = (PiState(s.kp, s.ki, s.out_limit), PiState(s.kp, s.ki, s.out_limit))
        self.damping = DampingConfig(s.damping, s.k_damp, s.hpf_hz)
        self.theta = self.pll.theta
        self.omega = self.pll.omega
        self.last = ControlOutput(np.zeros(3), DqPair(0.0, 0.0), 0.0, self.pi)
        self._over = False
        self._t_meas_prev = 0.0

    @property
    def enabled(self):
        return self.lock.locked

    def angle_at(self, t, t_latch):
        return self.theta + self.omega * (t - t_latch)

    def step(self, dt, v_g, v_c, i_g, ref, t_meas=0.0):
        """
        Advance all loops by ``dt`` and return the new command.

        ``t_meas`` is the time of the measurements relative to now (zero for
        instantaneous samples, negative for interval averages).  The PLL
        angle is predicted to the measurement instant, where the transforms
        are taken; the output is rotated to now.
        """
        # the PLL state holds the angle at the previous measurement instant;
        # predict it to this one, correct omega there and keep that angle
        gap = dt + t_meas - self._t_meas_prev
        self._t_meas_prev = t_meas
        if not gap > 0:
            raise DomainError(f"measurement instants must advance, got gap {gap!r}")
        th = (self.pll.theta + self.pll.omega * gap) % TWO_PI
        new = pll_step(v_g, gap, replace(self.pll, theta=th))
        self.pll = replace(new, theta=th)
        self.omega = new.omega
        self.theta = (th - self.omega * t_meas) % TWO_PI
        v_g_dq = abc_to_dq(v_g, th)
        self.lock.update(v_g_dq, dt)
        if not self.enabled or (ref[0] == 0.0 and ref[1] == 0.0):
            # no command: the modulator idles and the integrators restart
            self.pi = tuple(replace(p, integral=0.0) for p in self.pi)
            self.last = ControlOutput(np.zeros(3), DqPair(0.0, 0.0), 0.0, self.pi)
            return self.last
        v_c_dq = abc_to_dq(v_c, th)
        # warn once per excursion beyond the envelope, not every latch
        over = np.hypot(ref[0], ref[1]) > self.settings.out_limit
        warn, self._over = over and not self._over, over
        corr, self.damping = damping_step(v_c_dq, v_g_dq, dt, self.damping)
        out = current_control_step(abc_to_dq(i_g, th), ref, corr, dt, self.pi,
                                   self.theta, v_c_dq, self.v_in,
                                   ref_limit=self.settings.out_limit, warn=warn)
        self.pi = out.pi_states
        self.last = out
        return out
