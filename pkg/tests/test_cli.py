import csv

import numpy as np
import pytest

from aclink import cli, tfcore
from aclink.config import parse_config, serialize
from aclink.sim import EVENT_COLUMNS, TRACE_COLUMNS

TRACE_HEADER = "t,v_link,i_mag,mode,i_ga,i_gb,i_gc,v_ca,v_cb,v_cc,iq,id,iq_ref,id_ref,theta"
EVENT_HEADER = "t,kind,switch,v_device,link_energy"
BODE_HEADER = "f_hz,mag_db,phase_deg"


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def read_kv(path):
    with open(path) as fh:
        return dict(ln.rstrip("\n").split("=", 1) for ln in fh)


def bode(tmp_path, *args):
    out = tmp_path / "bode.csv"
    assert cli.main(["bode", "--out", str(out), *args]) == 0
    return read_csv(out)


def test_fmt():
    assert cli.fmt(1 / 3) == "0.333333333"
    assert cli.fmt(3) == "3" and cli.fmt(True) == "true" and cli.fmt(float("nan")) == "nan"


def test_parse_step():
    s = cli.parse_step("t=0.3,iq=4")
    assert (s.t, s.iq, s.id) == (0.3, 4.0, None)
    for bad in ("t=0.3", "iq=4", "t=0.3,x=1", "t=a,iq=1", "t0.3"):
        with pytest.raises(cli.UsageError):
            cli.parse_step(bad)


def test_headers_exact():
    assert ",".join(TRACE_COLUMNS) == TRACE_HEADER
    assert ",".join(EVENT_COLUMNS) == EVENT_HEADER
    assert ",".join(cli.BODE_COLUMNS) == BODE_HEADER


def test_bode_plant_peak(tmp_path):
    head, d = bode(tmp_path, "--which", "plant")
    assert ",".join(head) == BODE_HEADER
    assert d[0, 0] == 1.0 and d[-1, 0] == 10e3
    assert abs(d[np.argmax(d[:, 1]), 0] - 876.3) < 5.0


def test_bode_closed_undamped_is_plant_times_delay(tmp_path):
    _, d = bode(tmp_path, "--which", "closed", "--damped", "false")
    fp = parse_config().filter()
    ref = tfcore.make_plant(fp.L, fp.C, fp.r) * tfcore.make_pade_delay(0.5 / cli.F_SW_DESIGN)
    fr = tfcore.freq_response(ref, d[:, 0])
    assert np.allclose(d[:, 1], fr.magnitude_db, atol=1e-6)


@pytest.mark.parametrize("variant", ["cap", "ind"])
def test_bode_damped_below_undamped(tmp_path, variant):
    _, und = bode(tmp_path, "--which", "closed", "--damped", "false")
    _, dmp = bode(tmp_path, "--which", "closed", "--damping", variant)
    assert dmp[:, 1].max() <= und[:, 1].max()
    assert und[:, 1].max() - dmp[:, 1].max() >= 15.0


def test_bode_forward_needs_damping(tmp_path, capsys):
    assert cli.main(["bode", "--which", "forward", "--damped", "false"]) == 1
    assert "zero" in capsys.readouterr().err
    _, d = bode(tmp_path, "--which", "forward")
    assert np.all(np.isfinite(d))


def run_design(capsys, config=None, extra=()):
    argv = (["--config", str(config)] if config else []) + ["design", *extra]
    assert cli.main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    items = dict(ln.split("=", 1) for ln in lines if not ln.startswith("warning="))
    warns = [ln.split("=", 1)[1] for ln in lines if ln.startswith("warning=")]
    return items, warns


def write_config(tmp_path, changes):
    cfg = parse_config()
    for (sec, key), v in changes.items():
        cfg = cfg.with_value(sec, key, v)
    p = tmp_path / "c.ini"
    p.write_text(serialize(cfg))
    return p


def test_design_defaults(capsys):
    items, warns = run_design(capsys)
    assert float(items["damping_bw_target_hz"]) == 600.0
    assert float(items["current_loop_bw_max_hz"]) == 60.0
    assert abs(float(items["hpf_zero_hz"]) - 8.0) < 1e-9
    assert items["stable"] == "true" and items["routh_hurwitz_stable"] == "true"
    assert not any("undamped" in w for w in warns)


def test_design_warns_undamped(tmp_path, capsys):
    items, warns = run_design(capsys, write_config(tmp_path, {("control", "k_damp"): 0.0}))
    assert items["damping"] == "none"
    assert any("undamped" in w for w in warns)


def test_design_warns_high_corner(tmp_path, capsys):
    _, warns = run_design(capsys, write_config(tmp_path, {("control", "hpf_hz"): 3200.0}))
    assert any("HPF corner" in w for w in warns)


def test_sim_outputs(tmp_path):
    out = tmp_path / "run"
    argv = ["sim", "--t-stop", "0.1", "--step", "t=0.05,iq=3", "--out", str(out)]
    assert cli.main(argv) == 0
    with open(out / "trace.csv", newline="") as fh:
        first = fh.readline()
    assert first == TRACE_HEADER + "\n"
    with open(out / "events.csv", newline="") as fh:
        assert fh.readline() == EVENT_HEADER + "\n"
        assert "\r" not in fh.read()
    m = read_kv(out / "metrics.txt")
    assert m["zvs_violations"] == "0" and m["mode_sequence_ok"] == "true"
    assert abs(float(m["iq_final"]) - 3.0) < 0.05
    assert "step0_settling_time_2pct" in m and "step0_id_disturbance_energy" in m
    # deterministic files
    out2 = tmp_path / "run2"
    assert cli.main(argv[:-1] + [str(out2)]) == 0
    for name in ("trace.csv", "events.csv", "metrics.txt"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_sim_undamped_flags_resonance(tmp_path):
    out = tmp_path / "none"
    argv = ["sim", "--model", "averaged", "--damping", "none", "--t-stop", "0.2", "--out", str(out)]
    assert cli.main(argv) == 0
    assert read_kv(out / "metrics.txt")["resonance_decaying"] == "false"
    out = tmp_path / "cap"
    assert cli.main(argv[:4] + ["cap", "--t-stop", "0.2", "--out", str(out)]) == 0
    assert read_kv(out / "metrics.txt")["resonance_decaying"] == "true"


def test_sweep_rows_and_errors(tmp_path):
    out = tmp_path / "sweep.csv"
    argv = ["sweep", "--param", "iq", "--values", "2,9", "--model", "averaged",
            "--t-stop", "0.1", "--out", str(out)]
    assert cli.main(argv) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["status"] for r in rows] == ["ok", "error"]
    assert abs(float(rows[0]["iq_final"]) - 2.0) < 0.05
    assert "envelope" in rows[1]["error"]


def test_single_value_sweep_matches_sim(tmp_path):
    sw = tmp_path / "s.csv"
    assert cli.main(["sweep", "--param", "iq", "--values", "3", "--model", "averaged",
                     "--t-stop", "0.1", "--jobs", "1", "--out", str(sw)]) == 0
    with open(sw, newline="") as fh:
        row = next(csv.DictReader(fh))
    run = tmp_path / "r"
    cfg = write_config(tmp_path, {("sim", "iq_ref"): 3.0})
    assert cli.main(["--config", str(cfg), "sim", "--model", "averaged", "--t-stop", "0.1",
                     "--out", str(run)]) == 0
    m = read_kv(run / "metrics.txt")
    for k in ("thd_i_ga", "iq_final", "id_final"):
        assert row[k] == m[k]


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nfoo = 1\n")
    assert cli.main(["--config", str(bad), "design"]) == 1
    assert "foo" in capsys.readouterr().err
    assert cli.main(["sweep", "--param", "zz", "--values", "1"]) == 1
    assert cli.main(["sim", "--step", "oops", "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit) as ei:
        cli.main(["bode", "--which", "bogus"])
    assert ei.value.code == 2


def test_numeric_failure_exit_code(tmp_path, monkeypatch, capsys):
    from aclink.errors import SimulationError

    def boom(cfg):
        raise SimulationError("diverged", {"t": 0.0})
    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["sim", "--out", str(tmp_path)]) == 2
    assert "diverged" in capsys.readouterr().err
