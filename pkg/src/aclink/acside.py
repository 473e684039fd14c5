"""Stiff three-phase grid behind a CL output filter."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

SHIFTS = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])


@dataclass(frozen=True)
class GridParams:
    """``v_ll_rms`` is the line-line RMS voltage."""

    v_ll_rms: float = 60.0
    f_grid: float = 60.0
    phase0: float = 0.0

    def __post_init__(self):
        if not self.v_ll_rms > 0:
            raise DomainError(f"v_ll_rms must be > 0, got {self.v_ll_rms!r}")
        if not self.f_grid > 0:
            raise DomainError(f"f_grid must be > 0, got {self.f_grid!r}")

    @property
    def v_phase_peak(self):
        return self.v_ll_rms * np.sqrt(2.0 / 3.0)

    @property
    def omega(self):
        return 2.0 * np.pi * self.f_grid

    @property
    def period(self):
        return 1.0 / self.f_grid

    def angle(self, t):
        return self.omega * t + self.phase0


@dataclass(frozen=True)
class FilterParams:
    L: float = 1e-3
    C: float = 33e-6
    r: float = 2.0 * np.pi * 8.0 * 1e-3

    def __post_init__(self):
        if not self.L > 0 or not self.C > 0:
            raise DomainError("filter L and C must be > 0")
        if not self.r >= 0:
            raise DomainError(f"filter r must be >= 0, got {self.r!r}")

    @property
    def f_res(self):
        return 1.0 / (2.0 * np.pi * np.sqrt(self.L * self.C))


@dataclass(frozen=True)
class FilterGridState:
    v_c: np.ndarray
    i_g: np.ndarray

    def as_vector(self):
        return np.concatenate([self.v_c, self.i_g])


def grid_voltage(t, p):
    """Balanced phase voltages; phase a peaks at ``omega t + phase0 = 0``."""
    return p.v_phase_peak * np.cos(p.angle(t) + SHIFTS)


def filter_derivative(state, i_inv, v_g, p):
    """
    ``(dv_c/dt, di_g/dt)`` per phase.

    ``C dv_c/dt = i_inv - i_g`` and ``L di_g/dt = v_c - v_g - r i_g``.
    """
    v_c = np.asarray(state.v_c, dtype=float)
    i_g = np.asarray(state.i_g, dtype=float)
    dv = (np.asarray(i_inv, dtype=float) - i_g) / p.C
    di = (v_c - np.asarray(v_g, dtype=float) - p.r * i_g) / p.L
    return dv, di


def line_line(v):
    """(v_ab, v_bc, v_ca)."""
    v = np.asarray(v, dtype=float)
    return np.array([v[0] - v[1], v[1] - v[2], v[2] - v[0]])


def steady_state(t, grid, filt, i_inv_phasor=0.0):
    """
    Sinusoidal steady state of the filter at time ``t``.

    ``i_inv_phasor`` is the complex amplitude of the phase-a inverter
    current relative to the grid angle (0 gives the no-load state).
    """
    w = grid.omega
    zl = filt.r + 1j * w * filt.L
    yc = 1j * w * filt.C
    vg = grid.v_phase_peak
    # KCL at the capacitor: yc vc = i_inv - (vc - vg)/zl
    vc = (i_inv_phasor + vg / zl) / (yc + 1.0 / zl)
    ig = (vc - vg) / zl
    rot = np.exp(1j * (grid.angle(t) + SHIFTS))
    return FilterGridState(np.real(vc * rot), np.real(ig * rot))
