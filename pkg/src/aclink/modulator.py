"""
Switch controller: turns current references into a per-half-cycle plan.

Conduction intervals end by charge control: the integrated port current is
compared with ``reference * T_est / 2`` (one half of the estimated link
cycle).  Each half cycle one device per output leg is selected from the sign
of its reference; the leg with the largest reference is common to both
discharge pairs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .converter import CHARGING, DISCHARGING, SwitchId, check_mode
from .errors import ContractViolation, DomainError

T_SEED = 1.0 / 7000.0
# guards against a corrupt cycle measurement only; the estimate must follow
# the real cycle across the whole operating range
T_BOUNDS = (40e-6, 1e-3)


@dataclass(frozen=True)
class CyclePlan:
    """
    Latched plan for one half cycle.

    ``pairs`` holds the two candidate discharge pairs ``(common, other)``; the
    one conducting first is whichever line-line voltage the link reaches
    first, so it is resolved at run time.
    """

    selected_switches: tuple
    common_phase: int
    pairs: tuple
    input_current_ref: float
    input_charge_target: float
    per_phase_charge_targets: tuple
    i_ref_abc: tuple
    idle: bool = False

    def positive_negative(self, pair):
        """(positive-rail phase, negative-rail phase) of a pair."""
        x, y = pair
        if self.selected_switches[x].designator[1] == 3:
            return x, y
        return y, x

    @property
    def common_switch(self):
        return self.selected_switches[self.common_phase]


IDLE_PLAN = CyclePlan((), -1, (), 0.0, 0.0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), idle=True)


def begin_half_cycle(i_ref_abc, i_in_ref, T_est):
    """
    Latch the references for the coming half cycle.

    Parameters
    ----------
    i_ref_abc : sequence of 3 floats
        Inverter output current references (A).
    i_in_ref : float
        Average input current reference (A); negative values are treated
        as zero (this stage only models forward power flow).
    T_est : float
        Estimated full link-cycle period (s).

    Returns
    -------
    CyclePlan
        ``IDLE_PLAN`` when all references are zero.
    """
    if not T_est > 0:
        raise DomainError(f"T_est must be > 0, got {T_est!r}")
    ref = np.asarray(i_ref_abc, dtype=float)
    if ref.shape != (3,):
        raise DomainError("i_ref_abc must have three entries")
    if not np.any(ref):
        return IDLE_PLAN
    common = int(np.argmax(np.abs(ref)))
    sc = 1.0 if ref[common] > 0 else -1.0
    switches = []
    for k in range(3):
        if k == common:
            pos = 3 if sc > 0 else 1
        else:
            # legs opposing the common one; a zero reference joins the return side
            sk = np.sign(ref[k]) if ref[k] != 0 else -sc
            pos = 3 if sk > 0 else 1
        switches.append(SwitchId.output(k, pos))
    others = [k for k in range(3) if k != common]
    half = 0.5 * T_est
    i_in = max(float(i_in_ref), 0.0)
    return CyclePlan(
        selected_switches=tuple(switches),
        common_phase=common,
        pairs=((common, others[0]), (common, others[1])),
        input_current_ref=i_in,
        input_charge_target=i_in * half,
        per_phase_charge_targets=tuple(float(abs(r)) * half for r in ref),
        i_ref_abc=tuple(float(r) for r in ref),
    )


@dataclass
class ChargeAccumulator:
    integral: float = 0.0
    target: float = 0.0

    def add(self, current, dt):
        self.integral += abs(current) * dt


def charge_met(acc):
    return acc.integral >= acc.target


def on_mode_event(mode, plan, event, first_pair=None):
    """
    Gate commands for a mode event.

    Parameters
    ----------
    mode : int
        Mode being entered or exited.
    plan : CyclePlan
    event : {"enter", "exit"}
    first_pair : tuple, optional
        The pair that conducted first; required when exiting modes 3/9.

    Returns
    -------
    list of (SwitchId, bool)
        ``True`` commands the gate on.
    """
    mode = check_mode(mode)
    if event not in ("enter", "exit"):
        raise ContractViolation(f"unknown event {event!r}")
    pol = 1 if mode <= 6 else -1
    if mode in CHARGING:
        return [(SwitchId.input_pair(pol), event == "enter")]
    if plan.idle:
        return []
    if mode in (3, 9) and event == "enter":
        return [(s, True) for s in plan.selected_switches]
    if mode in (3, 9) and event == "exit":
        if first_pair is None:
            raise ContractViolation("exiting mode 3/9 needs the first pair")
        other = first_pair[1] if first_pair[0] == plan.common_phase else first_pair[0]
        return [(plan.selected_switches[other], False)]
    if mode in (5, 11) and event == "exit":
        if first_pair is None:
            return [(s, False) for s in plan.selected_switches]
        gone = first_pair[1] if first_pair[0] == plan.common_phase else first_pair[0]
        return [(s, False) for k, s in enumerate(plan.selected_switches) if k != gone]
    if mode in DISCHARGING or mode in (2, 4, 6, 8, 10, 12):
        return []
    raise ContractViolation(f"no gate action for {event} of mode {mode}")


@dataclass(frozen=True)
class PeriodEstimate:
    T_est: float = T_SEED


def update_period_estimate(prev, measured_cycle, bounds=T_BOUNDS):
    """Replace the estimate by the last measured cycle, clamped to ``bounds``."""
    if not measured_cycle > 0:
        raise DomainError(f"measured cycle must be > 0, got {measured_cycle!r}")
    lo, hi = bounds
    return PeriodEstimate(min(max(measured_cycle, lo), hi))
