"""Switching-level and averaged simulation of the inverter."""
from .config import RefStep, Scenario, SimConfig
from .results import EVENT_COLUMNS, TRACE_COLUMNS, EventLog, SimResult, Trace
from .switching import run_switching


def run(cfg):
    """Dispatch on ``cfg.model``."""
    if cfg.model == "averaged":
        from .averaged import run_averaged
        return run_averaged(cfg)
    return run_switching(cfg)


__all__ = ["RefStep", "Scenario", "SimConfig", "EVENT_COLUMNS", "TRACE_COLUMNS",
           "EventLog", "SimResult", "Trace", "run", "run_switching"]
