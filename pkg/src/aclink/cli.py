"""
Command-line front end: ``aclink sim | bode | design | sweep``.

Exit status is 0 on success, 1 for invalid configuration or arguments and
2 when a simulation or numerical routine fails.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import tfcore
from .config import ConfigError, parse_config
from .errors import (ContractViolation, DegenerateSystemError, DomainError,
                     NumericFailure, SimulationError)
from .sim import EVENT_COLUMNS, TRACE_COLUMNS, RefStep, run
from .sim import metrics as M

BODE_COLUMNS = ("f_hz", "mag_db", "phase_deg")
SWEEP_PARAMS = {"iq": ("sim", "iq_ref"), "id": ("sim", "id_ref"),
                "k_damp": ("control", "k_damp"), "hpf_hz": ("control", "hpf_hz"),
                "kp": ("control", "kp"), "ki": ("control", "ki"),
                "v_in": ("converter", "v_in")}
# switching frequency used for the delay in frequency-domain analysis
F_SW_DESIGN = 6000.0


class UsageError(DomainError):
    pass


# %% formatting

def fmt(v):
    """Nine significant digits; integers and strings pass through."""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".9g")


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) for v in r) + "\n")


def write_kv(path, items):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k, v in items.items():
            fh.write(f"{k}={fmt(v)}\n")


# %% argument helpers

def parse_step(text):
    """``"t=0.3,iq=4"`` (any of iq, id) to a :class:`RefStep`."""
    fields = {}
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"bad --step item {part!r}; expected key=value")
        k, v = (s.strip() for s in part.split("=", 1))
        if k not in ("t", "iq", "id"):
            raise UsageError(f"unknown --step key {k!r}; use t, iq, id")
        try:
            fields[k] = float(v)
        except ValueError:
            raise UsageError(f"--step value {v!r} for {k} is not a number") from None
    if "t" not in fields or len(fields) < 2:
        raise UsageError("--step needs t and at least one of iq, id")
    return RefStep(fields["t"], fields.get("iq"), fields.get("id"))


def parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def load(args):
    cfg = parse_config(args.config)
    if getattr(args, "damping", None):
        cfg = cfg.with_value("control", "damping", args.damping)
    if getattr(args, "model", None):
        cfg = cfg.with_value("sim", "model", args.model)
    if getattr(args, "t_stop", None) is not None:
        cfg = cfg.with_value("sim", "t_stop", args.t_stop)
    return cfg


# %% metrics summary

def summarize(res, steps=()):
    """Ordered ``key -> value`` metrics of one run."""
    cfg = res.config
    tr = res.trace
    f0 = cfg.grid.f_grid
    out = {"model": cfg.model, "damping": cfg.control.damping, "t_stop": cfg.t_stop}
    try:
        out["thd_i_ga"] = M.thd_window(tr, f0, periods=5)
    except DomainError:
        out["thd_i_ga"] = math.nan
    n = int(round(1.0 / (f0 * (tr["t"][1] - tr["t"][0]))))
    out["iq_final"] = float(np.mean(tr["iq"][-n:]))
    out["id_final"] = float(np.mean(tr["id"][-n:]))
    out["i_g_peak_abs"] = float(np.max(np.abs(tr.i_g)))
    if cfg.model == "switching":
        try:
            out["f_sw_hz"] = M.measured_switching_frequency(res.events, min(0.05, cfg.t_stop / 2))
        except DomainError:
            out["f_sw_hz"] = math.nan
        z = M.zvs_ratios(res.events, cfg.converter.C_link)
        out["zvs_max_ratio"] = float(z.max()) if z.size else 0.0
        out["zvs_violations"] = int(np.sum(z > 0.01))
        out["gate_events"] = int(z.size)
        out["mode_sequence_ok"] = M.mode_sequence_ok(res.events)
        drift = M.resonance_energy_drift(res.events)
        out["energy_drift_max"] = float(drift.max()) if drift.size else 0.0
        pb = M.power_balance(res.cycles, 1.0 / f0, t0=cfg.t_stop / 2)
        out["power_balance_max"] = float(pb.max()) if pb.size else math.nan
        for k, v in sorted(res.stats.items()):
            if k in ("anomalies", "pair_crossings", "pairs_skipped"):
                out[k] = v
    else:
        out["f_sw_hz"] = math.nan
    out.update(_resonance_flags(tr, cfg))
    for j, s in enumerate(sorted(steps, key=lambda s: s.t)):
        ch = "iq" if s.iq is not None else "id"
        cross = "id" if ch == "iq" else "iq"
        try:
            prim = M.step_metrics(tr, s.t, ch, smooth=1.0 / (6.0 * f0))
            sec = M.step_metrics(tr, s.t, cross, step_size=_step_size(cfg, s, ch),
                                 smooth=1.0 / (6.0 * f0))
        except DomainError:
            continue
        out[f"step{j}_t"] = s.t
        out[f"step{j}_overshoot"] = prim["overshoot"]
        out[f"step{j}_settling_time_2pct"] = prim["settling_time_2pct"]
        out[f"step{j}_settled"] = prim["settled"]
        out[f"step{j}_{cross}_disturbance_energy"] = sec["disturbance_energy"]
    return out


def _step_size(cfg, step, ch):
    before = cfg.scenario.ref(step.t - 1e-9)
    after = cfg.scenario.ref(step.t)
    return (after.q - before.q) if ch == "iq" else (after.d - before.d)


def _resonance_flags(tr, cfg):
    """Band-passed grid current near the filter resonance, recent vs earlier."""
    fs = tr.sample_rate
    f_res = cfg.filter.f_res
    y = M.bandpass(tr["i_ga"], fs, 0.6 * f_res, 1.5 * f_res)
    w = int(round(0.02 * fs))
    if y.size < 3 * w:
        return {}
    last = float(np.sqrt(np.mean(y[-w:] ** 2)))
    prev = float(np.sqrt(np.mean(y[-2 * w:-w] ** 2)))
    fund = max(float(np.sqrt(np.mean(tr["i_ga"][-w:] ** 2))), 1e-12)
    growth = last / max(prev, 1e-12)
    frac = last / fund
    # sustained resonance: a large band share that is not shrinking
    decaying = not (frac > 0.1 and growth > 0.9)
    return {"resonance_band_fraction": frac, "resonance_growth": growth,
            "resonance_decaying": decaying}


# %% subcommands

def cmd_sim(args):
    cfg = load(args)
    steps = [parse_step(s) for s in args.step or ()]
    sc = cfg.sim_config(steps)
    res = run(sc)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "trace.csv"), TRACE_COLUMNS, res.trace.data)
    write_csv(os.path.join(args.out, "events.csv"), EVENT_COLUMNS, res.events)
    write_kv(os.path.join(args.out, "metrics.txt"), summarize(res, steps))
    return 0


def bode_tf(cfg, which, damped):
    """Transfer function selected by ``--which`` / ``--damped``."""
    fp = cfg.filter()
    plant = tfcore.make_plant(fp.L, fp.C, fp.r)
    if which == "plant":
        return plant
    delay = tfcore.make_pade_delay(0.5 / F_SW_DESIGN)
    comp = _compensator(cfg) if damped else None
    if which == "forward":
        if comp is None:
            raise UsageError("the forward loop is identically zero without damping")
        return tfcore.forward_loop(delay, comp, plant)
    return tfcore.closed_loop_grid_tf(delay, comp, plant)


def _compensator(cfg):
    variant = cfg.damping_variant()
    if variant == "none":
        return None
    fp = cfg.filter()
    c = cfg.values["control"]
    hpf = tfcore.make_hpf(c["hpf_hz"]) if variant == "cap" else None
    return tfcore.make_compensator(c["k_damp"], fp.L, fp.r, hpf)


def cmd_bode(args):
    cfg = load(args)
    tf = bode_tf(cfg, args.which, args.damped)
    freqs = tfcore.log_grid(args.f_lo, args.f_hi, args.per_decade, tf)
    fr = tfcore.freq_response(tf, freqs)
    rows = zip(fr.freqs_hz, fr.magnitude_db, fr.phase_deg)
    if args.out:
        write_csv(args.out, BODE_COLUMNS, rows)
    else:
        sys.stdout.write(",".join(BODE_COLUMNS) + "\n")
        for r in rows:
            sys.stdout.write(",".join(fmt(v) for v in r) + "\n")
    return 0


def design_report(cfg):
    """``(items, warnings)`` for the configured damping design."""
    fp = cfg.filter()
    c = cfg.values["control"]
    rules = tfcore.select_parameters(F_SW_DESIGN, fp.L, fp.C, fp.r, c["k_damp"])
    items = {"f_sw_min_hz": rules.f_sw_min,
             "damping_bw_target_hz": rules.damping_bw_target,
             "current_loop_bw_max_hz": rules.current_loop_bw_max,
             "hpf_zero_hz": rules.hpf_zero_hz,
             "filter_resonance_hz": fp.f_res,
             "damping": cfg.damping_variant(), "k_damp": c["k_damp"],
             "hpf_hz": c["hpf_hz"]}
    warnings = []
    delay = tfcore.make_pade_delay(0.5 / F_SW_DESIGN)
    plant = tfcore.make_plant(fp.L, fp.C, fp.r)
    comp = _compensator(cfg)
    closed = tfcore.closed_loop_grid_tf(delay, comp, plant)
    rep = tfcore.stability(closed)
    routh = tfcore.routh_hurwitz_stable(closed.den.coeffs)
    items["stable"] = rep.is_stable
    items["routh_hurwitz_stable"] = routh
    items["max_pole_real"] = float(np.max(rep.poles.real))
    if comp is None:
        warnings.append("damping disabled (k = 0 or variant none): the filter resonance is undamped")
    else:
        fwd = tfcore.forward_loop(delay, comp, plant)
        gm, pm = tfcore.margins(fwd)
        items["damping_gain_margin_db"] = math.nan if gm is None else gm
        items["damping_phase_margin_deg"] = math.nan if pm is None else pm
        if cfg.damping_variant() == "cap" and c["hpf_hz"] > rules.damping_bw_target:
            warnings.append(f"HPF corner {c['hpf_hz']:g} Hz sits far above the {rules.hpf_zero_hz:.3g} Hz "
                            "zero, inside the damping band; expect weaker damping")
    if not rep.is_stable:
        warnings.append("closed damping loop is unstable")
    bw = current_loop_bandwidth(closed, c["kp"], c["ki"])
    items["current_loop_bw_hz"] = bw
    if not bw <= rules.current_loop_bw_max:
        warnings.append(f"current-loop bandwidth {bw:.4g} Hz exceeds the {rules.current_loop_bw_max:.4g} Hz rule")
    return items, warnings


def current_loop_bandwidth(inner, kp, ki):
    """-3 dB frequency of the PI current loop closed around ``inner`` (Hz)."""
    pi = tfcore.TransferFunction(tfcore.Polynomial([ki, kp]), tfcore.Polynomial([0.0, 1.0]))
    ol = pi * inner
    cl = tfcore.TransferFunction(ol.num, ol.den + ol.num)
    f = tfcore.log_grid(0.1, 10e3, 400)
    m = tfcore.freq_response(cl, f).magnitude_db
    below = np.nonzero(m < m[0] - 3.0)[0]
    return float(f[below[0]]) if below.size else math.inf


def cmd_design(args):
    cfg = load(args)
    items, warnings = design_report(cfg)
    for k, v in items.items():
        sys.stdout.write(f"{k}={fmt(v)}\n")
    for w in warnings:
        sys.stdout.write(f"warning={w}\n")
    return 0


def _sweep_one(cfg, param, value):
    """One isolated sweep scenario; failures are returned, not raised."""
    sec, key = SWEEP_PARAMS[param]
    try:
        c = cfg.with_value(sec, key, value)
        res = run(c.sim_config())
        return "ok", summarize(res), ""
    except (ConfigError, DomainError, SimulationError, NumericFailure,
            DegenerateSystemError, ContractViolation) as exc:
        return "error", {}, f"{type(exc).__name__}: {exc}"


SWEEP_COLUMNS = ("param", "value", "status", "f_sw_hz", "thd_i_ga", "iq_final",
                 "id_final", "zvs_max_ratio", "error")


def cmd_sweep(args):
    cfg = load(args)
    if args.param not in SWEEP_PARAMS:
        raise UsageError(f"--param must be one of {', '.join(SWEEP_PARAMS)}")
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--values {args.values!r} is not a comma-separated number list") from None
    if not values:
        raise UsageError("--values is empty")
    jobs = args.jobs or min(len(values), os.cpu_count() or 1)
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_sweep_one, [cfg] * len(values),
                                  [args.param] * len(values), values))
    else:
        results = [_sweep_one(cfg, args.param, v) for v in values]
    rows = []
    for v, (status, m, err) in zip(values, results):
        rows.append([args.param, v, status] + [m.get(k, math.nan) for k in SWEEP_COLUMNS[3:-1]]
                    + [err.replace(",", ";").replace("\n", " ")])
    if args.out:
        write_csv(args.out, SWEEP_COLUMNS, rows)
    else:
        sys.stdout.write(",".join(SWEEP_COLUMNS) + "\n")
        for r in rows:
            sys.stdout.write(",".join(fmt(x) for x in r) + "\n")
    return 0


# %% entry point

def build_parser():
    p = argparse.ArgumentParser(prog="aclink", description=__doc__.strip().splitlines()[0])
    p.add_argument("--config", help="INI file (default: shipped prototype parameters)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sim", help="time-domain simulation")
    s.add_argument("--damping", choices=("cap", "ind", "none"))
    s.add_argument("--step", action="append", help='reference step, e.g. "t=0.3,iq=4"; repeatable')
    s.add_argument("--model", choices=("switching", "averaged"))
    s.add_argument("--t-stop", type=float, dest="t_stop")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_sim)

    b = sub.add_parser("bode", help="frequency response CSV")
    b.add_argument("--which", choices=("plant", "forward", "closed"), default="plant")
    b.add_argument("--damped", type=parse_bool, default=True)
    b.add_argument("--damping", choices=("cap", "ind", "none"))
    b.add_argument("--f-lo", type=float, default=1.0, dest="f_lo")
    b.add_argument("--f-hi", type=float, default=10e3, dest="f_hi")
    b.add_argument("--per-decade", type=int, default=200, dest="per_decade")
    b.add_argument("--out", help="CSV file (default: stdout)")
    b.set_defaults(func=cmd_bode)

    d = sub.add_parser("design", help="design rules and stability verdict")
    d.add_argument("--damping", choices=("cap", "ind", "none"))
    d.set_defaults(func=cmd_design)

    w = sub.add_parser("sweep", help="parameter sweep of steady runs")
    w.add_argument("--param", required=True)
    w.add_argument("--values", required=True, help="comma-separated values")
    w.add_argument("--damping", choices=("cap", "ind", "none"))
    w.add_argument("--model", choices=("switching", "averaged"))
    w.add_argument("--t-stop", type=float, dest="t_stop")
    w.add_argument("--jobs", type=int, default=0, help="worker processes (default: one per value)")
    w.add_argument("--out", help="CSV file (default: stdout)")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            sys.stderr.write(f"config error: {e}\n")
        return 1
    except (SimulationError, NumericFailure, DegenerateSystemError) as exc:
        sys.stderr.write(f"numeric failure in {args.command}: {exc}\n")
        return 2
    except (DomainError, ContractViolation) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
