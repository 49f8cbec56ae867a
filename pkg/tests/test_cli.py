import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from exoopt.cli import main, parse_range
from exoopt.gait import save_trace, two_leg_synthetic

VACUOUS = ["--tau-req", "0.001", "--omega-req", "0.001", "--fn-req", "0.001", "--tau-b-max", "1000"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def data_rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.reader(lines))


def test_evaluate_reference(capsys):
    code, out, _ = run(capsys, "evaluate", "--rg", "0.021", "--n", "36", "--age", "10")
    doc = json.loads(out)
    assert code == 3  # speed requirement missed
    rep = doc["report"]
    assert rep["feasible"]["required_torque"] and not rep["feasible"]["max_speed"]
    assert rep["max_speed"] == pytest.approx(5.185, abs=1e-3)
    assert doc["config"]["k_c"] == 100.0 and doc["config"]["dt"] == 5e-5


def test_evaluate_feasible_exit_zero(capsys):
    code, out, _ = run(capsys, "evaluate", "--rg", "0.02", "--n", "10", "--age", "10", *VACUOUS)
    assert code == 0 and json.loads(out)["report"]["overall"]


def test_missing_age_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["evaluate", "--rg", "0.02", "--n", "10"])
    assert exc.value.code == 2
    assert "--age" in capsys.readouterr().err


def test_bound_violation_named(capsys):
    code, _, err = run(capsys, "evaluate", "--rg", "0.2", "--n", "10", "--age", "10")
    assert code == 2 and "0.05" in err


def test_optimize_bad_age(capsys):
    code, _, err = run(capsys, "optimize", "--age", "2")
    assert code == 2 and "age" in err


def test_optimize_sweep(capsys):
    code, out, err = run(capsys, "optimize", "--ages", "3:5:1")
    doc = json.loads(out)
    radii = [r["r_g_opt"] for r in doc["results"]]
    assert code == 0 and len(radii) == 3
    assert radii == sorted(radii)
    assert "r_g_opt" in err


def test_optimize_infeasible_exit_three(capsys):
    code, out, _ = run(capsys, "optimize", "--age", "10", "--tau-req", "10000")
    doc = json.loads(out)
    assert code == 3 and doc["results"][0]["infeasible"]
    assert doc["results"][0]["binding"] == ["required_torque"]


def test_grid_mass(capsys):
    code, out, _ = run(capsys, "grid", "--metric", "mass", "--rg", "0.01:0.03:3", "--n", "1:20:4")
    rows = data_rows(out)
    assert code == 0 and rows[0] == ["r_g_m", "n", "mass"]
    vals = np.array([float(r[2]) for r in rows[1:]]).reshape(3, 4)
    assert np.all(vals == vals[:, :1])


@pytest.mark.parametrize("text", ["0.01:0.03", "a:b:3", "0.03:0.01:3", "0.01:0.03:0", "0.01:0.03:1.5", "0.01:0.03:1"])
def test_grid_malformed_range(capsys, text):
    code, _, _ = run(capsys, "grid", "--metric", "mass", "--rg", text, "--n", "1:2:2")
    assert code == 2


def test_parse_range():
    np.testing.assert_allclose(parse_range("10:10:1"), [10.0])
    np.testing.assert_allclose(parse_range("3:18:1", integer_step=True), np.arange(3, 19))


def test_bode(capsys):
    code, out, err = run(capsys, "bode", "--rg", "0.021", "--n", "36", "--flo", "1", "--fhi", "100", "--points", "3")
    rows = data_rows(out)
    assert code == 0 and rows[0] == ["frequency_hz", "magnitude_db", "phase_deg"]
    assert len(rows) == 4
    bw = float(err.split("bandwidth_-3dB_hz:")[1].split()[0])
    assert bw == pytest.approx(3.013, abs=2e-3)


def test_bode_backdrive_has_no_bandwidth(capsys):
    code, _, err = run(capsys, "bode", "--tf", "backdrive", "--points", "3")
    assert code == 0 and "n/a" in err


def test_controller_synthetic(capsys):
    code, out, _ = run(capsys, "controller", "--synthetic", "--cycles", "2")
    rows = data_rows(out)
    assert code == 0 and rows[0][-2:] == ["tau_r_nm", "tau_l_nm"]
    assert len(rows) == 2001
    for r in rows[1:]:
        assert float(r[5]) == -float(r[6])


def test_controller_input_file_untouched(capsys, tmp_path):
    p = tmp_path / "legs.csv"
    save_trace(two_leg_synthetic(duration=1.0), p)
    before = p.read_bytes()
    code, out, _ = run(capsys, "controller", "--input", str(p), "--kappa", "5", "--shift", "0")
    assert code == 0 and p.read_bytes() == before
    assert len(data_rows(out)) == 1001


def test_controller_bad_file(capsys, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time_s,foo\n0,1\n0.001,2\n")
    code, _, err = run(capsys, "controller", "--input", str(p))
    assert code == 2 and "line 1" in err


def test_config_precedence(capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k_c": 200.0, "kp": 2.0}))
    _, out, _ = run(capsys, "evaluate", "--rg", "0.02", "--n", "10", "--age", "10", "--config", str(cfg), "--kp", "3")
    doc = json.loads(out)
    assert doc["config"]["k_c"] == 200.0 and doc["config"]["kp"] == 3.0
    monkeypatch.setenv("EXOOPT_CONFIG", str(cfg))
    _, out, _ = run(capsys, "evaluate", "--rg", "0.02", "--n", "10", "--age", "10")
    assert json.loads(out)["config"]["k_c"] == 200.0


def test_bad_config_file(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k_c": 100.0, "bogus": 1}))
    code, _, err = run(capsys, "evaluate", "--rg", "0.02", "--n", "10", "--age", "10", "--config", str(cfg))
    assert code == 2 and "bogus" in err


def test_echoed_config_reruns_identically(capsys, tmp_path):
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    args = ["evaluate", "--rg", "0.02", "--n", "10", "--age", "10", "--kc", "150"]
    main(args + ["-o", str(first)])
    main(args[:-2] + ["--config", str(first), "-o", str(second)])
    capsys.readouterr()
    assert first.read_bytes() == second.read_bytes()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "exoopt", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "exoopt" in res.stdout
