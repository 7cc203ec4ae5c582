import json
import subprocess
import sys

import pytest

from rsma_istn.cli import main


def test_solve_prints_report(capsys):
    assert main(["solve", "--scheme", "SDMA-ISTN", "--altitude-km", "2000", "--pt-dbm", "30"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["scheme"] == "SDMA-ISTN" and out["status"] == "converged"
    assert out["audit_violation"] <= 1e-5
    joint = out["joint"]
    assert len(joint["beam_totals"]) == 3 and len(joint["cu_totals"]) == 3
    assert out["mmf"] == pytest.approx(min(joint["beam_totals"] + joint["cu_totals"]), abs=1e-6)


def test_solve_split_scheme_has_two_parts(capsys):
    assert main(["solve", "--scheme", "RSMA-OMA", "--set", "rng_seed=3"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) >= {"satellite", "cellular"} and out["beta"] == 0.5


def test_solve_config_file_and_trace(tmp_path, capsys):
    cfg = tmp_path / "s.yaml"
    cfg.write_text("sat_altitude_km: 10000\ncsit_error_var: 0.01\n")
    trace = tmp_path / "t.csv"
    assert main(["solve", "--config", str(cfg), "--scheme", "sdma-istn", "--trace", str(trace)]) == 0
    assert trace.read_text().startswith("iteration,q,max_violation,solver_status")


def test_bad_inputs_exit_2(tmp_path, capsys):
    assert main(["solve", "--set", "no_such_key=1"]) == 2
    assert main(["solve", "--set", "novalue"]) == 2
    assert main(["report", str(tmp_path / "missing.csv")]) == 2
    plan = tmp_path / "p.yaml"
    plan.write_text("values: [500]\nn_trials: 1\n")
    assert main(["sweep", str(plan)]) == 2  # no output path


def test_sweep_and_report(tmp_path, capsys):
    plan = tmp_path / "p.yaml"
    plan.write_text("sweep:\n  axis: h_sat_km\n  values: [500]\nn_trials: 2\nschemes: [SDMA-ISTN]\n")
    out = tmp_path / "r.csv"
    assert main(["sweep", str(plan), "-o", str(out)]) == 0
    assert out.read_text().startswith("# rsma-istn-results/1")
    assert main(["report", str(out), "--out-dir", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "r_summary.csv").exists()


def test_report_exit_nonzero_on_unclean(tmp_path, capsys):
    path = tmp_path / "u.csv"
    path.write_text("# rsma-istn-results/1 axis=h_sat_km\n"
                    "kind,scheme,h_sat_km,p_t_dbm,csit_error_var,trial,mmf,status,clean\n"
                    "detail,SDMA-ISTN,500.0,30.0,0.0,0,1.0,solver_numerical_failure,0\n")
    assert main(["report", str(path)]) == 1


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "rsma_istn.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("solve", "sweep", "report"):
        assert cmd in res.stdout
