"""Containers for simulation output."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

TRACE_COLUMNS = ("t", "v_link", "i_mag", "mode", "i_ga", "i_gb", "i_gc",
                 "v_ca", "v_cb", "v_cc", "iq", "id", "iq_ref", "id_ref", "theta")
EVENT_COLUMNS = ("t", "kind", "switch", "v_device", "link_energy")

MODE_TRANSITION = "mode-transition"
GATE_ON = "gate-on"
GATE_OFF = "gate-off"


class Trace:
    """Uniformly sampled column store; columns are attributes and keys."""

    def __init__(self, data):
        data = np.asarray(data, dtype=float).reshape(-1, len(TRACE_COLUMNS))
        self.data = data
        self._index = {c: k for k, c in enumerate(TRACE_COLUMNS)}

    def __getitem__(self, name):
        return self.data[:, self._index[name]]

    def __getattr__(self, name):
        if name.startswith("_") or name == "data":
            raise AttributeError(name)
        try:
            return self[name]
        except KeyError:
            raise AttributeError(name) from None

    def __len__(self):
        return self.data.shape[0]

    @property
    def i_g(self):
        return self.data[:, 4:7]

    @property
    def v_c(self):
        return self.data[:, 7:10]

    def window(self, t0, t1):
        t = self.data[:, 0]
        m = (t >= t0 - 1e-12) & (t < t1 - 1e-12)
        return Trace(self.data[m])

    @property
    def sample_rate(self):
        return 1.0 / float(np.median(np.diff(self.data[:, 0])))


class Event(NamedTuple):
    t: float
    kind: str
    switch: str
    v_device: float
    link_energy: float


@dataclass
class EventLog:
    rows: list = field(default_factory=list)

    def add(self, t, kind, switch, v_device, link_energy):
        self.rows.append(Event(float(t), kind, str(switch), float(v_device), float(link_energy)))

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def of_kind(self, *kinds):
        return [e for e in self.rows if e.kind in kinds]

    def mode_entries(self, mode):
        tag = f"M{mode}"
        return np.array([e.t for e in self.rows
                         if e.kind == MODE_TRANSITION and e.switch == tag])


class HalfCycle(NamedTuple):
    """Book-keeping for one latched half cycle (diagnostic, not a CSV schema)."""

    t_start: float
    t_end: float
    polarity: int
    T_est: float
    idle: bool
    i_ref_abc: tuple
    charge_targets: tuple
    charge_delivered: tuple
    input_charge_target: float
    e_in: float
    e_out: float
    first_pair: tuple
    max_mode_times: dict


@dataclass
class SimResult:
    trace: Trace
    events: EventLog
    cycles: list
    config: object
    stats: dict = field(default_factory=dict)
