import json
import os
import subprocess
import sys

import pytest

from spinburst import cli, io
from spinburst.errors import IntegrationError, InvariantViolation


def run(args):
    return cli.main([str(a) for a in args])


def base_exact(tmp_path, **over):
    cfg = {"solver": "exact", "n": 2, "t_max": 8.0, "n_samples": 60,
           "gamma_r": 1.0}
    cfg.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


class TestSimulate:
    def test_run_writes_artifacts(self, tmp_path, capsys):
        cfg = base_exact(tmp_path)
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--out", out]) == 0
        shown = capsys.readouterr().out
        assert "peak_intensity" in shown
        run_dirs = [d for d in os.listdir(out) if d != "manifest.jsonl"]
        assert len(run_dirs) == 1
        run_dir = out / run_dirs[0]
        assert (run_dir / "series.csv").exists()
        assert (run_dir / "config.resolved.json").exists()
        records = io.read_manifest(out / "manifest.jsonl")
        assert records[0]["status"] == "ok"
        assert records[0]["run_id"] == run_dirs[0]

    def test_flag_overrides_file(self, tmp_path):
        cfg = base_exact(tmp_path, n=2)
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--n", 3,
                    "--out", out]) == 0
        records = io.read_manifest(out / "manifest.jsonl")
        assert records[0]["config"]["n"] == 3
        assert records[0]["n"] == 3

    def test_duplicate_run_refused_without_force(self, tmp_path, capsys):
        cfg = base_exact(tmp_path)
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--out", out]) == 0
        assert run(["simulate", "--config", cfg, "--out", out]) == 2
        assert "--force" in capsys.readouterr().err
        assert run(["simulate", "--config", cfg, "--out", out,
                    "--force"]) == 0

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"solver": "exact"}))  # no n
        assert run(["simulate", "--config", cfg,
                    "--out", tmp_path / "r"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_capacity_error_exit(self, tmp_path):
        cfg = base_exact(tmp_path, n=30)
        assert run(["simulate", "--config", cfg,
                    "--out", tmp_path / "r"]) == 2

    def test_solver_failure_exit(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "run_solver", lambda cfg: (_ for _ in ())
                            .throw(IntegrationError("stalled")))
        cfg = base_exact(tmp_path)
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--out", out]) == 3
        records = io.read_manifest(out / "manifest.jsonl")
        assert records[0]["status"] == "integration_error"

    def test_invariant_violation_exit(self, tmp_path, monkeypatch):
        monkeypatch.setattr(cli, "run_solver", lambda cfg: (_ for _ in ())
                            .throw(InvariantViolation("hermiticity lost")))
        cfg = base_exact(tmp_path)
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--out", out]) == 4
        records = io.read_manifest(out / "manifest.jsonl")
        assert records[0]["status"] == "invariant_violation"

    def test_semiclassical_scan_csv(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "solver": "semiclassical", "n": 4, "gamma_r": 1.0,
            "omega_s": 0.5, "scan_param": "omega_x", "scan_start": 0.0,
            "scan_stop": 0.3, "scan_points": 3, "relax_time": 60.0,
            "scan_bidirectional": False}))
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--out", out]) == 0
        run_dirs = [d for d in os.listdir(out) if d != "manifest.jsonl"]
        scan = (out / run_dirs[0] / "scan.csv").read_text().splitlines()
        assert scan[0].startswith("param,value")
        assert len(scan) == 4


class TestSweep:
    def test_ladder_n_sweep_reports_fit(self, tmp_path, capsys):
        out = tmp_path / "sweep"
        rc = run(["sweep", "--solver", "ladder", "--t-max", 8.0,
                  "--n-samples", 300, "--param", "n",
                  "--values", "4,8,16", "--out", out])
        assert rc == 0
        shown = capsys.readouterr().out
        assert "r^2" in shown
        summary = json.loads((out / "summary.json").read_text())
        assert summary["points"] == 3
        assert summary["r_squared"] > 0.9
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[0].split(",")[0] == "param"
        assert len(rows) == 4

    def test_threaded_matches_serial(self, tmp_path):
        args = ["sweep", "--solver", "ladder", "--t-max", 8.0,
                "--n-samples", 200, "--param", "n", "--values", "4,8"]
        assert run(args + ["--out", tmp_path / "a"]) == 0
        assert run(args + ["--out", tmp_path / "b", "--workers", 2]) == 0
        a = (tmp_path / "a" / "sweep.csv").read_text()
        b = (tmp_path / "b" / "sweep.csv").read_text()
        assert a == b

    def test_unknown_param_rejected(self, tmp_path):
        assert run(["sweep", "--solver", "ladder", "--param", "frobnicate",
                    "--values", "1", "--out", tmp_path / "s"]) == 2


class TestCompare:
    def test_single_spin_agrees(self, tmp_path, capsys):
        cfg = base_exact(tmp_path, n=1, t_max=20.0, n_samples=200)
        out = tmp_path / "cmp"
        assert run(["compare", "--config", cfg, "--out", out]) == 0
        report = json.loads((out / "compare.json").read_text())
        assert report["sup_norm_deviation"] < 1e-6
        assert report["peak_height_deviation"] < 1e-6
        assert report["passed"] is True

    def test_reference_solver_required(self, tmp_path):
        cfg = base_exact(tmp_path, solver="cumulant")
        assert run(["compare", "--config", cfg,
                    "--out", tmp_path / "cmp"]) == 2


class TestEnsemble:
    def test_nv_statistics(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "solver": "exact", "profile": "nv", "concentration": 0.02,
            "gamma_r": 1.0, "t_max": 6.0, "n_samples": 50}))
        out = tmp_path / "ens"
        rc = run(["ensemble", "--config", cfg, "--n-values", "2,3",
                  "--environments", 2, "--out", out])
        assert rc == 0
        rows = (out / "ensemble.csv").read_text().splitlines()
        assert len(rows) == 5
        summary = json.loads((out / "summary.json").read_text())
        assert summary["2"]["count"] == 2
        assert summary["3"]["count"] == 2
        assert "relative peak" in capsys.readouterr().out

    def test_requires_nv_profile(self, tmp_path):
        cfg = base_exact(tmp_path)
        assert run(["ensemble", "--config", cfg, "--n-values", "2",
                    "--out", tmp_path / "e"]) == 2


class TestPlotAndRerun:
    def test_plot_deterministic(self, tmp_path):
        cfg = base_exact(tmp_path)
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--out", out]) == 0
        run_dir = [d for d in os.listdir(out) if d != "manifest.jsonl"][0]
        series = out / run_dir / "series.csv"
        p1 = tmp_path / "one.svg"
        p2 = tmp_path / "two.svg"
        assert run(["plot", series, "--out", p1, "--log-y"]) == 0
        assert run(["plot", series, "--out", p2, "--log-y"]) == 0
        assert p1.read_bytes() == p2.read_bytes()

    def test_plot_unknown_column(self, tmp_path):
        cfg = base_exact(tmp_path)
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--out", out]) == 0
        run_dir = [d for d in os.listdir(out) if d != "manifest.jsonl"][0]
        series = out / run_dir / "series.csv"
        assert run(["plot", series, "--column", "phase",
                    "--out", tmp_path / "x.svg"]) == 2

    def test_rerun_reproduces_series(self, tmp_path, capsys):
        cfg = base_exact(tmp_path)
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--out", out]) == 0
        run_dir = [d for d in os.listdir(out) if d != "manifest.jsonl"][0]
        rr = tmp_path / "replay"
        assert run(["rerun", "--manifest", out / "manifest.jsonl",
                    "--run-id", run_dir, "--out", rr]) == 0
        original = (out / run_dir / "series.csv").read_bytes()
        assert (rr / "series.csv").read_bytes() == original
        assert "drift" in capsys.readouterr().out

    def test_rerun_unknown_id(self, tmp_path):
        cfg = base_exact(tmp_path)
        out = tmp_path / "runs"
        assert run(["simulate", "--config", cfg, "--out", out]) == 0
        assert run(["rerun", "--manifest", out / "manifest.jsonl",
                    "--run-id", "deadbeef", "--out", tmp_path / "r"]) == 2


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "spinburst.cli",
                           "simulate", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "--epsilon" in proc.stdout
