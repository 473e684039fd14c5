"""
Lumped model of the partial-resonance AC link.

The link is the transformer magnetizing inductance ``L_M`` in parallel with
the (secondary-reflected) film capacitance ``C_link``.  One link cycle is
twelve modes; modes 1-6 run with positive polarity and 7-12 mirror them::

    1, 7        charge from the DC input (link clamped to +-v_in)
    3, 5, 9, 11 discharge into an output phase pair (link clamped)
    2, 4, 6, 8, 10, 12   partial resonance (pure LC exchange)

Sign conventions: ``i_M`` is the magnetizing current with
``L_M di_M/dt = v_L`` and in resonance ``C_link dv_L/dt = -i_M``.  In the
positive half cycle the link charges at ``v_L = +v_in`` and discharges at
``v_L = -n * v_pair`` (flyback polarity; ``v_pair`` is the line-line voltage
of the conducting pair, positive phase minus negative phase).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, DomainError

PHASES = "abc"

CHARGING = frozenset({1, 7})
DISCHARGING = frozenset({3, 5, 9, 11})
RESONANT = frozenset({2, 4, 6, 8, 10, 12})


@dataclass(frozen=True)
class ConverterParams:
    """Circuit constants of the AC-link stage (SI units)."""

    v_in: float = 150.0
    L_M: float = 425e-6
    C_link: float = 100e-9
    n: float = 1.0
    i_out_range: tuple = (1.0, 4.5)

    def __post_init__(self):
        for name in ("v_in", "L_M", "C_link", "n"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)!r}")
        lo, hi = self.i_out_range
        if not (0 < lo <= hi):
            raise DomainError(f"i_out_range must satisfy 0 < lo <= hi, got {self.i_out_range!r}")

    @property
    def natural_period(self):
        """Full period of the unloaded link, ``2 pi sqrt(L_M C_link)``."""
        return 2.0 * np.pi * np.sqrt(self.L_M * self.C_link)

    def residual_energy(self, v_port_max):
        """
        Link energy left at the end of the second discharge.

        Enough for the link voltage to swing 10 % past the larger of the input
        voltage and the reflected peak port voltage.
        """
        v = 1.1 * max(self.v_in, self.n * v_port_max)
        return 0.5 * self.C_link * v * v


@dataclass(frozen=True)
class LinkState:
    v_L: float
    i_M: float

    def energy(self, params):
        return link_energy(self.v_L, self.i_M, params)


def link_energy(v_L, i_M, params):
    return 0.5 * params.L_M * i_M * i_M + 0.5 * params.C_link * v_L * v_L


def check_mode(mode):
    if isinstance(mode, bool) or not isinstance(mode, (int, np.integer)) or not 1 <= mode <= 12:
        raise ContractViolation(f"mode must be an integer in 1..12, got {mode!r}")
    return int(mode)


def polarity(mode):
    """+1 for modes 1-6, -1 for modes 7-12."""
    return 1 if check_mode(mode) <= 6 else -1


def advance_mode(mode):
    return check_mode(mode) % 12 + 1


def mode_kind(mode):
    mode = check_mode(mode)
    if mode in CHARGING:
        return "charging"
    if mode in DISCHARGING:
        return "discharging"
    return "resonant"


@dataclass(frozen=True)
class SwitchId:
    """
    A bidirectional reverse-blocking device (or input pair).

    Input designators are ``"p"`` (pair used in mode 1) and ``"n"`` (mirrored
    pair of mode 7).  Output designators are ``(phase, position)`` with
    position 3 on the positive rail and 1 on the negative rail.
    """

    side: str
    designator: object

    def __post_init__(self):
        if self.side == "input":
            if self.designator not in ("p", "n"):
                raise DomainError(f"input designator must be 'p' or 'n', got {self.designator!r}")
        elif self.side == "output":
            ph, pos = self.designator
            if ph not in PHASES or pos not in (1, 3):
                raise DomainError(f"bad output designator {self.designator!r}")
        else:
            raise DomainError(f"side must be 'input' or 'output', got {self.side!r}")

    @classmethod
    def input_pair(cls, pol):
        return cls("input", "p" if pol > 0 else "n")

    @classmethod
    def output(cls, phase, position):
        if isinstance(phase, (int, np.integer)):
            phase = PHASES[phase]
        return cls("output", (phase, int(position)))

    @property
    def phase_index(self):
        return PHASES.index(self.designator[0])

    @property
    def name(self):
        if self.side == "input":
            return "Qin_" + self.designator
        ph, pos = self.designator
        return f"Q{ph}{pos}"

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class ZvsRecord:
    time: float
    switch: SwitchId
    transition: str  # "on" | "off"
    v_device: float


def clamp_voltage(mode, params, port_voltage):
    """Signed link voltage imposed by a conducting port in ``mode``."""
    pol = polarity(mode)
    if mode in CHARGING:
        return pol * port_voltage
    if mode in DISCHARGING:
        return -pol * params.n * port_voltage
    raise ContractViolation(f"mode {mode} has no conducting port")


def link_derivative(state, mode, params, port_voltage=None, conducting=True):
    """
    Time derivative ``(dv_L/dt, di_M/dt)`` of the link in ``mode``.

    In a conducting mode the link voltage is held by the port (``dv_L/dt``
    is reported as 0) and the magnetizing current ramps at
    ``clamp / L_M``; ``port_voltage`` is the input voltage for charging modes
    and the pair line-line voltage for discharging modes.  Resonance modes,
    and the armed-but-blocking start of modes 1 and 7 (``conducting=False``),
    are a lossless LC exchange.
    """
    mode = check_mode(mode)
    if mode in RESONANT or not conducting:
        return -state.i_M / params.C_link, state.v_L / params.L_M
    if port_voltage is None:
        raise ContractViolation(f"mode {mode} needs the port voltage")
    v = clamp_voltage(mode, params, port_voltage)
    return 0.0, v / params.L_M


@dataclass(frozen=True)
class ExitEnv:
    """
    Inputs to the mode-exit predicates.

    ``v_target`` is the signed link voltage at which the awaited port becomes
    forward biased.  ``charge``/``charge_target`` are the accumulated and
    required charge of the running conduction interval.
    """

    v_in: float = 0.0
    v_target: float = 0.0
    charge: float = 0.0
    charge_target: float = 0.0
    e_residual: float = 0.0
    conducting: bool = True


def mode_exit_predicate(mode, state, env, params):
    """
    Signed scalar that is positive inside ``mode`` and crosses zero at exit.

    ========  =======================================================
    mode      exit condition
    ========  =======================================================
    1, 7      blocking: link reaches the input voltage; conducting:
              input charge reaches its target
    2, 8      link reaches the first output pair voltage
    3, 9      first pair charge met (or link down to residual energy)
    4, 10     link reaches the second output pair voltage
    5, 11     link energy down to the residual energy
    6, 12     magnetizing current crosses zero (link voltage extremum)
    ========  =======================================================
    """
    mode = check_mode(mode)
    pol = polarity(mode)
    if mode in CHARGING:
        if not env.conducting:
            return pol * state.v_L - env.v_in
        return env.charge_target - env.charge
    if mode in (2, 4, 8, 10):
        return pol * (state.v_L - env.v_target)
    energy = link_energy(state.v_L, state.i_M, params)
    if mode in (3, 9):
        return min(env.charge_target - env.charge, energy - env.e_residual)
    if mode in (5, 11):
        return energy - env.e_residual
    return pol * state.i_M


def device_voltage(switch, state, v_in, v_out=None, pol=1, partner=None, params=None):
    """
    Voltage across ``switch``: link side minus port side.

    For an input pair this is ``s * v_L - v_in`` with ``s`` the pair's
    polarity.  For an output device it is measured against the pair it
    conducts with (``partner``): the link-side secondary voltage
    ``-pol * v_L / n`` minus the pair line-line voltage.  Zero means the
    device can change state without a voltage step.
    """
    if switch.side == "input":
        s = 1 if switch.designator == "p" else -1
        return s * state.v_L - v_in
    if v_out is None or partner is None:
        raise ContractViolation("output device voltage needs v_out and the partner device")
    n = params.n if params is not None else 1.0
    a, b = switch, partner
    if a.designator[1] != 3:
        a, b = b, a
    v_pair = v_out[a.phase_index] - v_out[b.phase_index]
    return -pol * state.v_L / n - v_pair
