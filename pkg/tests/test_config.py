import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aclink.config import SCHEMA, ConfigError, default_path, parse_config, parse_string, serialize


def default_text():
    return default_path().read_text()


def replace_line(text, key, line):
    out = [line if ln.split("=")[0].strip() == key else ln for ln in text.splitlines()]
    return "\n".join(out)


def test_default_file_is_prototype_set():
    cfg = parse_config()
    cp, fp, gp = cfg.converter(), cfg.filter(), cfg.grid()
    assert (cp.v_in, cp.L_M, cp.C_link, cp.n) == (150.0, 425e-6, 100e-9, 1.0)
    assert (fp.L, fp.C) == (1e-3, 33e-6)
    assert np.isclose(fp.r / (2 * np.pi * fp.L), 8.0)
    assert (gp.v_ll_rms, gp.f_grid) == (60.0, 60.0)
    c = cfg.controller()
    assert (c.kp, c.ki, c.k_damp, c.hpf_hz, c.damping) == (0.2, 800.0, 0.2, 160.0, "cap")
    sc = cfg.sim_config()
    assert sc.dt == 1e-7 and np.isclose(sc.event_tol, 1e-9) and sc.model == "switching"


def test_round_trip():
    cfg = parse_config()
    assert parse_string(serialize(cfg)) == cfg


@settings(max_examples=25, deadline=None)
@given(st.floats(1.0, 500.0), st.floats(0.0, 2.0), st.sampled_from(["cap", "ind", "none"]),
       st.floats(-3.0, 3.0))
def test_round_trip_property(v_in, k, damping, iq):
    cfg = (parse_config().with_value("converter", "v_in", v_in)
           .with_value("control", "k_damp", k).with_value("control", "damping", damping)
           .with_value("sim", "iq_ref", iq))
    assert parse_string(serialize(cfg)) == cfg


def test_negative_k_names_precondition():
    with pytest.raises(ConfigError) as ei:
        parse_string(replace_line(default_text(), "k_damp", "k_damp = -1"))
    assert any("k_damp" in e and "k > 0" in e for e in ei.value.errors)


def test_unknown_key_named():
    text = default_text().replace("[grid]", "[grid]\nfoo = 1")
    with pytest.raises(ConfigError) as ei:
        parse_string(text)
    assert any("foo" in e for e in ei.value.errors)


def test_unknown_section_and_missing_key():
    text = replace_line(default_text(), "ki", "") + "\n[extra]\nx = 1\n"
    with pytest.raises(ConfigError) as ei:
        parse_string(text)
    errs = " | ".join(ei.value.errors)
    assert "extra" in errs and "ki" in errs


def test_all_errors_reported():
    text = replace_line(default_text(), "k_damp", "k_damp = -1")
    text = replace_line(text, "v_in", "v_in = 0")
    text = replace_line(text, "model", "model = fast")
    text = text.replace("[grid]", "[grid]\nfoo = 1")
    with pytest.raises(ConfigError) as ei:
        parse_string(text)
    errs = ei.value.errors
    for key in ("k_damp", "v_in", "model", "foo"):
        assert any(key in e for e in errs), key


def test_non_numeric_value():
    with pytest.raises(ConfigError) as ei:
        parse_string(replace_line(default_text(), "kp", "kp = fast"))
    assert any("kp" in e for e in ei.value.errors)


@pytest.mark.parametrize("key,line", [
    ("dt", "dt = 1e-5"),
    ("iq_ref", "iq_ref = 5.0"),
])
def test_cross_checks(key, line):
    with pytest.raises(ConfigError):
        parse_string(replace_line(default_text(), key, line))


def test_coarse_step_ok_for_averaged():
    text = replace_line(replace_line(default_text(), "dt", "dt = 1e-5"), "model", "model = averaged")
    assert parse_string(text).sim_config().dt == 1e-5


def test_zero_gain_disables_damping():
    cfg = parse_config().with_value("control", "k_damp", 0.0)
    assert cfg.damping_variant() == "none" and cfg.controller().damping == "none"


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/aclink.ini")


def test_schema_sections():
    assert set(SCHEMA) == {"converter", "filter", "grid", "control", "sim"}
