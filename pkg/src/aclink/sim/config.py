"""Simulation configuration and scenario description."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..acside import FilterParams, GridParams
from ..control import ControllerSettings, DqPair
from ..converter import ConverterParams
from ..errors import DomainError
from ..modulator import T_BOUNDS


@dataclass(frozen=True)
class RefStep:
    t: float
    iq: float | None = None
    id: float | None = None


@dataclass
class Scenario:
    """Piecewise-constant dq grid-current references."""

    iq0: float = 2.0
    id0: float = 0.0
    steps: tuple = ()

    def ref(self, t):
        iq, id_ = self.iq0, self.id0
        for s in sorted(self.steps, key=lambda s: s.t):
            if t < s.t:
                break
            if s.iq is not None:
                iq = s.iq
            if s.id is not None:
                id_ = s.id
        return DqPair(id_, iq)


@dataclass
class SimConfig:
    """
    Everything one simulation run needs.

    ``dt`` defaults to 100 ns for the switching model; the averaged model
    uses ``dt_averaged``.  ``trace_dt`` is chosen so every fundamental period
    holds an integer number of samples.
    """

    converter: ConverterParams = field(default_factory=ConverterParams)
    filter: FilterParams = field(default_factory=FilterParams)
    grid: GridParams = field(default_factory=GridParams)
    control: ControllerSettings = field(default_factory=ControllerSettings)
    scenario: Scenario = field(default_factory=Scenario)
    t_stop: float = 0.2
    dt: float = 100e-9
    dt_averaged: float = 10e-6
    event_tol: float = 1e-9
    model: str = "switching"
    samples_per_period: int = 2000
    init: str = "steady"
    prelocked: bool = True
    f_sw_hz: float = 6000.0
    period_bounds: tuple = T_BOUNDS
    max_mode_time: float = 2e-3

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.model not in ("switching", "averaged"):
            raise DomainError(f"model must be 'switching' or 'averaged', got {self.model!r}")
        if not self.t_stop > 0:
            raise DomainError("t_stop must be > 0")
        if not self.dt > 0 or not self.dt_averaged > 0:
            raise DomainError("time steps must be > 0")
        if self.model == "switching" and self.dt > 1e-6:
            raise DomainError("switching model needs dt <= 1 us to resolve the link resonance")
        if not 0 < self.event_tol <= self.dt / 100.0 * (1 + 1e-9):
            raise DomainError("event_tol must satisfy 0 < event_tol <= dt/100")
        if self.init not in ("steady", "zero"):
            raise DomainError(f"init must be 'steady' or 'zero', got {self.init!r}")
        if self.samples_per_period < 10:
            raise DomainError("samples_per_period must be >= 10")
        if not self.f_sw_hz > 0:
            raise DomainError("f_sw_hz must be > 0")
        lo, hi = self.period_bounds
        if not 0 < lo <= hi:
            raise DomainError("period_bounds must satisfy 0 < lo <= hi")

    @property
    def trace_dt(self):
        return 1.0 / (self.grid.f_grid * self.samples_per_period)
