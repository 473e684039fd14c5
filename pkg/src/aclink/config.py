"""
INI configuration files.

A file has the sections ``[converter]``, ``[filter]``, ``[grid]``,
``[control]`` and ``[sim]``.  Every key listed in :data:`SCHEMA` without a
default is required; unknown sections and keys are rejected.  Validation
collects every problem before raising, so one run reports them all.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from importlib import resources

from .acside import FilterParams, GridParams
from .control import VARIANTS, ControllerSettings
from .converter import ConverterParams
from .errors import DomainError
from .sim.config import Scenario, SimConfig

__all__ = ["ConfigError", "AppConfig", "SCHEMA", "parse_config", "parse_string",
           "serialize", "default_path"]


class ConfigError(DomainError):
    """All validation failures of one configuration file."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _k_damp(v):
    return None if v >= 0 else "violates k > 0 (k = 0 disables damping)"


def _dt(v):
    if not v > 0:
        return "must be > 0"
    return None


def _damping(v):
    return None if v in VARIANTS else f"must be one of cap, ind, none (got {v!r})"


def _model(v):
    return None if v in ("switching", "averaged") else "must be switching or averaged"


# (type, check, default); default None means required
SCHEMA = {
    "converter": {
        "v_in": (float, _positive, None),
        "L_M_uH": (float, _positive, None),
        "C_link_nF": (float, _positive, None),
        "turns_ratio": (float, _positive, None),
    },
    "filter": {
        "L_mH": (float, _positive, None),
        "C_uF": (float, _positive, None),
        "r_ohm": (float, _nonneg, None),
    },
    "grid": {
        "v_ll_rms": (float, _positive, None),
        "f_hz": (float, _positive, None),
    },
    "control": {
        "kp": (float, _nonneg, None),
        "ki": (float, _nonneg, None),
        "k_damp": (float, _k_damp, None),
        "hpf_hz": (float, _positive, None),
        "damping": (str, _damping, None),
        "pll_bw_hz": (float, _positive, None),
    },
    "sim": {
        "t_stop": (float, _positive, None),
        "dt": (float, _dt, None),
        "model": (str, _model, None),
        "iq_ref": (float, None, 2.0),
        "id_ref": (float, None, 0.0),
    },
}


@dataclass(frozen=True)
class AppConfig:
    """Parsed and validated configuration in file units."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        section, name = key
        return self.values[section][name]

    def with_value(self, section, name, value):
        """Copy with one value replaced and re-validated."""
        vals = {s: dict(kv) for s, kv in self.values.items()}
        vals[section][name] = value
        return validate(vals)

    # -- typed views ------------------------------------------------------

    def converter(self):
        c = self.values["converter"]
        return ConverterParams(v_in=c["v_in"], L_M=c["L_M_uH"] / 1e6,
                               C_link=c["C_link_nF"] / 1e9, n=c["turns_ratio"])

    def filter(self):
        f = self.values["filter"]
        return FilterParams(L=f["L_mH"] / 1e3, C=f["C_uF"] / 1e6, r=f["r_ohm"])

    def grid(self):
        g = self.values["grid"]
        return GridParams(v_ll_rms=g["v_ll_rms"], f_grid=g["f_hz"])

    def damping_variant(self):
        c = self.values["control"]
        return "none" if c["k_damp"] == 0.0 else VARIANTS[c["damping"]]

    def controller(self):
        c = self.values["control"]
        return ControllerSettings(kp=c["kp"], ki=c["ki"], damping=self.damping_variant(),
                                  k_damp=c["k_damp"], hpf_hz=c["hpf_hz"],
                                  pll_bw_hz=c["pll_bw_hz"])

    def scenario(self, steps=()):
        s = self.values["sim"]
        return Scenario(iq0=s["iq_ref"], id0=s["id_ref"], steps=tuple(steps))

    def sim_config(self, steps=(), **overrides):
        s = self.values["sim"]
        kw = dict(converter=self.converter(), filter=self.filter(), grid=self.grid(),
                  control=self.controller(), scenario=self.scenario(steps),
                  t_stop=s["t_stop"], dt=s["dt"], event_tol=s["dt"] / 100.0,
                  model=s["model"])
        kw.update(overrides)
        return SimConfig(**kw)


def _convert(raw, sections_seen):
    """String values to typed values; returns (values, errors)."""
    errors = []
    values = {}
    for sec in sections_seen:
        if sec not in SCHEMA:
            errors.append(f"unknown section [{sec}]")
    for sec, keys in SCHEMA.items():
        given = raw.get(sec)
        if given is None:
            errors.append(f"missing section [{sec}]")
            continue
        for k in given:
            if k not in keys:
                errors.append(f"unknown key {k!r} in [{sec}]")
        out = {}
        for k, (typ, _, default) in keys.items():
            if k not in given:
                if default is None:
                    errors.append(f"missing key {k!r} in [{sec}]")
                else:
                    out[k] = default
                continue
            text = given[k].strip()
            if typ is float:
                try:
                    v = float(text)
                except ValueError:
                    errors.append(f"[{sec}] {k} = {text!r} is not a number")
                    continue
                if not math.isfinite(v):
                    errors.append(f"[{sec}] {k} must be finite")
                    continue
                out[k] = v
            else:
                out[k] = text
        values[sec] = out
    return values, errors


def validate(values, errors=()):
    """Check every value against its domain; raise one ConfigError listing all failures."""
    errors = list(errors)
    for sec, keys in SCHEMA.items():
        for k, (_, check, _) in keys.items():
            v = values.get(sec, {}).get(k)
            if v is None or check is None:
                continue
            msg = check(v)
            if msg:
                errors.append(f"[{sec}] {k} = {v!r} {msg}")
    if not errors:
        s = values["sim"]
        if s["model"] == "switching" and s["dt"] > 1e-6:
            errors.append(f"[sim] dt = {s['dt']!r} violates dt <= 1e-6 s for the switching model")
        lim = ControllerSettings().out_limit
        if math.hypot(s["iq_ref"], s["id_ref"]) > lim:
            errors.append(f"[sim] reference magnitude |(id_ref, iq_ref)| exceeds the {lim:g} A envelope")
        c = values["control"]
        if c["kp"] == 0.0 and c["ki"] == 0.0:
            errors.append("[control] kp and ki are both zero; the current loop would be open")
    if errors:
        raise ConfigError(errors)
    cfg = AppConfig({s: dict(values[s]) for s in SCHEMA})
    # cross-check against the domain types
    try:
        cfg.sim_config()
    except DomainError as exc:
        raise ConfigError([str(exc)]) from None
    return cfg


def _parser():
    p = configparser.ConfigParser(interpolation=None, default_section="\x00")
    p.optionxform = str
    return p


def parse_string(text):
    """Parse configuration text; see :func:`parse_config`."""
    p = _parser()
    try:
        p.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed file: {exc}"]) from None
    raw = {s: dict(p[s]) for s in p.sections()}
    values, errors = _convert(raw, p.sections())
    if errors:
        # report domain problems in the parts that did convert as well
        try:
            validate(_fill(values), errors)
        except ConfigError as exc:
            raise ConfigError(_dedupe(exc.errors)) from None
    return validate(values)


def _fill(values):
    out = {}
    for sec, keys in SCHEMA.items():
        out[sec] = {k: values.get(sec, {}).get(k) for k in keys}
    return out


def _dedupe(errors):
    seen, out = set(), []
    for e in errors:
        if e not in seen:
            seen.add(e)
            out.append(e)
    return out


def default_path():
    return resources.files("aclink").joinpath("data/default.ini")


def parse_config(path=None):
    """
    Load and validate a configuration file.

    Parameters
    ----------
    path : str or path-like, optional
        INI file; the shipped default when omitted.

    Returns
    -------
    AppConfig

    Raises
    ------
    ConfigError
        Listing every missing, unknown or out-of-domain entry.
    """
    if path is None:
        text = default_path().read_text()
    else:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    return parse_string(text)


def serialize(cfg):
    """INI text that parses back to an identical configuration."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k in keys:
            v = cfg.values[sec][k]
            lines.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
