import csv
import json
from pathlib import Path

import pytest

from energyspace import report
from energyspace.analysis import droop_equilibrium
from energyspace.cli import main, run_sweep, sweep_summary, worker_count
from energyspace.config import ConfigError, build_scenario, load_config, resolve_scenario_path
from energyspace.sim import simulate


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_list(capsys):
    assert main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert len(names) == 8 and "rlc_const_fblc" in names


def test_run_rlc_fblc_settles(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "--scenario", "rlc_const_fblc", "--out", str(out)]) == 0
    m = report.loads((out / "metrics.txt").read_text())
    assert m["steady_state_error"] < 0.08
    assert m["certificate_violations"] == 0
    for name in ("trajectory.csv", "residuals.txt", "certificate.txt", "manifest.json"):
        assert (out / name).is_file()
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["status"] == "ok"
    assert set(doc["outputs"]) <= {p.name for p in out.iterdir()}
    assert any(name.endswith(".svg") for name in doc["outputs"])
    assert doc["scenario_file"].endswith("rlc_const_fblc.toml")
    assert len(doc["config_hash"]) == 64


def test_run_droop_records_offset(tmp_path):
    out = tmp_path / "droop"
    assert main(["run", "--scenario", "gen_sigmoid_droop", "--out", str(out), "--no-plots"]) == 0
    m = report.loads((out / "metrics.txt").read_text())
    w, _, _ = droop_equilibrium(2000.0, 377.0)
    assert m["steady_state_error"] == pytest.approx(377.0 - w, rel=1e-3)
    assert m["steady_state_error"] > 0.5


def test_missing_controller_exits_1(tmp_path, capsys):
    src = resolve_scenario_path("rlc_const_fblc").read_text()
    head, _, tail = src.partition("[controller]")
    bad = tmp_path / "bad.toml"
    bad.write_text(head + tail.split("\n", 3)[3])
    assert "[controller]" not in bad.read_text()
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "'controller'" in capsys.readouterr().err


def test_simulation_error_exits_2_and_keeps_partial(tmp_path, capsys):
    out = tmp_path / "bm"
    code = main(["run", "--scenario", "rlc_tv_brayton_moser", "--step", "1e-4", "--horizon", "0.1",
                 "--set", "sim.decimation=1", "--out", str(out), "--no-plots"])
    assert code == 2
    err = (out / "error.txt").read_text()
    assert "step" in err
    assert len((out / "trajectory.csv").read_text().splitlines()) > 2
    assert json.loads((out / "manifest.json").read_text())["status"] == "simulation-error"


@pytest.mark.parametrize("scenario", ["rlc_const_smc", "stress_fblc_feedback"])
def test_verify_reproduces_in_run_certificate(tmp_path, capsys, scenario):
    out = tmp_path / "r"
    main(["run", "--scenario", scenario, "--horizon", "0.5", "--out", str(out), "--no-plots"])
    capsys.readouterr()
    assert main(["verify", "--trajectory", str(out / "trajectory.csv")]) == 0
    printed = capsys.readouterr().out
    in_run = (out / "certificate.txt").read_text()
    assert printed == in_run
    assert (out / "verify_certificate.txt").read_text() == in_run


def test_verify_schema_mismatch_exits_1(tmp_path, capsys):
    bad = tmp_path / "t.csv"
    bad.write_text("t,x0,x1\n0,1,2\n")
    code = main(["verify", "--trajectory", str(bad), "--scenario", "rlc_const_fblc"])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_verify_needs_a_configuration(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("t\n0\n")
    assert main(["verify", "--trajectory", str(bad)]) == 1


def test_compare_table_and_series(tmp_path):
    out = tmp_path / "cmp"
    code = main(["compare", "--scenario", "rlc_const_fblc", "--horizon", "0.5",
                 "--controllers", "fblc,smc", "--out", str(out), "--no-plots"])
    assert code == 0
    rows = read_rows(out / "comparison.csv")
    assert [r["controller"] for r in rows] == ["fblc", "smc"]
    assert all(r["status"] == "ok" for r in rows)
    for field in ("settling_time_2pct", "overshoot", "steady_state_error", "effort_l2", "effort_tv"):
        assert all(r[field] != "" for r in rows)
    series = read_rows(out / "compare_series.csv")
    assert {"t", "P_load", "y_fblc", "u_smc"} <= set(series[0])


def test_compare_marks_failed_member(tmp_path):
    out = tmp_path / "cmp"
    code = main(["compare", "--scenario", "rlc_const_fblc", "--horizon", "0.1",
                 "--controllers", "fblc,brayton_moser", "--out", str(out), "--no-plots"])
    assert code == 2
    rows = {r["controller"]: r["status"] for r in read_rows(out / "comparison.csv")}
    assert rows == {"fblc": "ok", "brayton_moser": "failed"}


def test_compare_rejects_invalid_member(tmp_path):
    code = main(["compare", "--scenario", "rlc_const_fblc", "--controllers", "fblc,droop",
                 "--out", str(tmp_path / "c")])
    assert code == 1


def test_seed_does_not_change_output(tmp_path, monkeypatch):
    monkeypatch.setenv("ENERGYSPACE_WORKERS", "2")
    args = ["compare", "--scenario", "rlc_const_fblc", "--horizon", "0.05",
            "--controllers", "proportional,fblc,smc", "--no-plots"]
    main(args + ["--out", str(tmp_path / "a")])
    main(args + ["--out", str(tmp_path / "b"), "--seed", "7"])
    for name in ("comparison.csv", "compare_series.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("ENERGYSPACE_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ENERGYSPACE_WORKERS", "zero")
    with pytest.raises(ConfigError):
        worker_count()
    monkeypatch.delenv("ENERGYSPACE_WORKERS")
    assert worker_count() >= 1


def test_empty_grid(tmp_path, capsys):
    out = tmp_path / "sw"
    assert main(["sweep", "--scenario", "rlc_const_fblc", "--grid", "gains.fblc.K2=",
                 "--out", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert read_rows(out / "sweep.csv") == []
    summary = report.loads((out / "sweep_summary.txt").read_text())
    assert summary["points"] == 0


def test_sweep_records_failures_and_continues(tmp_path):
    out = tmp_path / "sw"
    code = main(["sweep", "--scenario", "rlc_const_fblc", "--horizon", "0.05",
                 "--grid", "gains.fblc.K1=-1,10", "--out", str(out)])
    assert code == 0
    rows = read_rows(out / "sweep.csv")
    assert [r["gains.fblc.K1"] for r in rows] == ["-1", "10"]
    assert rows[0]["status"].startswith("config-error")
    assert rows[1]["status"] == "ok"


@pytest.mark.slow
def test_k2_sweep_shape():
    """Settling improves up to critical damping; beyond it overshoot is gone."""
    path = resolve_scenario_path("rlc_const_fblc")
    cfg = load_config(path)
    cfg["sim"]["T"] = 3.0
    recs = run_sweep(cfg, path.parent, {"gains.fblc.K2": [2.0, 4.0, 6.0, 10.0]})
    ts = [r["settling_time_2pct"] for r in recs]
    os_ = [r["overshoot"] for r in recs]
    assert ts[0] > ts[1] > ts[2] < ts[3]
    assert all(a >= b for a, b in zip(os_, os_[1:]))
    assert os_[2] == os_[3] == 0.0
    summary = sweep_summary(recs, ["gains.fblc.K2"])
    assert json.loads(summary["best_settling_time_2pct"]) == {"gains.fblc.K2": 6.0}


def test_rerun_from_manifest_is_bit_identical(tmp_path):
    out = tmp_path / "run"
    main(["run", "--scenario", "gen_sigmoid_fblc", "--horizon", "2", "--out", str(out), "--no-plots"])
    doc = json.loads((out / "manifest.json").read_text())
    traj = simulate(build_scenario(doc["config"], Path(doc["scenario_file"]).parent))
    traj.to_csv(tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_bytes() == (out / "trajectory.csv").read_bytes()
