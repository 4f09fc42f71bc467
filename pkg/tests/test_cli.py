import json
import shutil
import subprocess
import sys

import numpy as np
import pytest
import yaml

from tubalreg import io
from tubalreg.cli import main

MINIMAL = {"sim": {"n": 50, "d1": 5, "d2": 5, "d3": 2, "r": 1, "noise": "gaussian"}}


def write_cfg(path, cfg):
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


@pytest.fixture
def simulated(tmp_path):
    cfg = write_cfg(tmp_path / "sim.yaml", {"sim": {"n": 120, "d1": 4, "d2": 4, "d3": 2, "r": 1, "noise": {"sd": 0.0}}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "sim"), "--seed", "3"]) == 0
    return tmp_path / "sim"


# simulate -------------------------------------------------------------------------


def test_simulate_minimal(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", MINIMAL)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    for name in ("B0.tb3", "manifest.json", "data/X.tb3", "data/y.csv", "data/manifest.json"):
        assert (tmp_path / "a" / name).exists()
    man = io.read_json(tmp_path / "a" / "manifest.json")
    assert man["sim"]["n"] == 50 and man["sim"]["noise"]["kind"] == "gaussian"
    data = io.read_dataset(tmp_path / "a" / "data")
    assert data.X.shape == (50, 5, 5, 2)


def test_simulate_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", MINIMAL)
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / d), "--seed", "9"]) == 0
    for f in sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_simulate_rank_too_large(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.yaml", {"sim": {**MINIMAL["sim"], "r": 7}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")]) == 1
    assert "r=7" in capsys.readouterr().err


def test_config_errors(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", {"sim": {"n": 10, "colour": "red"}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert main(["simulate", "--config", write_cfg(tmp_path / "d.yaml", MINIMAL)]) == 1
    assert main(["frobnicate"]) == 1
    (tmp_path / "bad.yaml").write_text("sim: [1, 2\n")
    assert main(["simulate", "--config", str(tmp_path / "bad.yaml"), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2


# fit and cv -----------------------------------------------------------------------


def test_fit_noiseless_recovery(tmp_path, simulated):
    cfg = {
        "data": str(simulated / "data"),
        "truth": str(simulated / "B0.tb3"),
        "estimator": {"loss": "LSR", "penalty": "mcp", "lambda": 1e-6, "solver": {"eps_tol": 1e-10, "max_iter": 5000}},
    }
    out = tmp_path / "fit"
    assert main(["fit", "--config", write_cfg(tmp_path / "f.yaml", cfg), "--out", str(out)]) == 0
    for name in ("B_hat.tb3", "trace.csv", "report.csv", "B_hat.pgm"):
        assert (out / name).exists()
    report = io.read_rows(out / "report.csv")[0]
    assert float(report["err"]) < 1e-3
    obj = io.read_trace(out / "trace.csv")["objective"]
    assert np.all(np.diff(obj) <= 1e-12 * np.maximum(1, np.abs(obj[:-1])))


def test_fit_requires_lambda(tmp_path, simulated):
    cfg = {"data": str(simulated / "data"), "estimator": {"penalty": "mcp"}}
    assert main(["fit", "--config", write_cfg(tmp_path / "f.yaml", cfg), "--out", str(tmp_path / "o")]) == 1


def test_fit_missing_data(tmp_path):
    cfg = {"data": str(tmp_path / "nowhere"), "estimator": {"lambda": 0.1}}
    assert main(["fit", "--config", write_cfg(tmp_path / "f.yaml", cfg), "--out", str(tmp_path / "o")]) == 2


def test_cv_writes_table_with_one_selected_point(tmp_path, simulated):
    cfg = {
        "data": "sim/data",
        "truth": "sim/B0.tb3",
        "estimator": {"loss": "huber", "penalty": "scad", "folds": 3, "lambda_grid": [0.01, 0.1], "solver": {"max_iter": 100}},
    }
    out = tmp_path / "cv"
    assert main(["cv", "--config", write_cfg(tmp_path / "cv.yaml", cfg), "--out", str(out)]) == 0
    rows = io.read_rows(out / "cv.csv")
    assert len(rows) == 2 * 3 * 3
    chosen = {(r["lambda"], r["robustification"]) for r in rows if r["selected"] == "1"}
    assert len(chosen) == 1
    report = io.read_rows(out / "report.csv")[0]
    assert (report["lambda"], report["robustification"]) == chosen.pop()
    obj = io.read_trace(out / "trace.csv")["objective"]
    assert np.all(np.diff(obj) <= 1e-12 * np.maximum(1, np.abs(obj[:-1])))


# trace-plot -----------------------------------------------------------------------


def test_trace_plot(tmp_path):
    p = tmp_path / "trace.csv"
    p.write_text("iter,objective,eta,increment_norm,backtracks\n0,3.0,,,0\n1,2.0,1.0,0.5,0\n2,1.5,1.0,0.1,1\n")
    assert main(["trace-plot", str(p), "--out", str(tmp_path / "plot")]) == 0
    lines = (tmp_path / "plot" / "trace.dat").read_text().splitlines()[1:]
    assert len(lines) == 3
    obj = [float(line.split()[1]) for line in lines]
    assert obj == sorted(obj, reverse=True)
    assert "plot 'trace.dat'" in (tmp_path / "plot" / "trace.gp").read_text()


def test_trace_plot_errors(tmp_path):
    assert main(["trace-plot", str(tmp_path / "missing.csv")]) == 2
    (tmp_path / "t.csv").write_text("nothing,here\n1,2\n")
    assert main(["trace-plot", str(tmp_path / "t.csv")]) == 2


# bench and entry point ------------------------------------------------------------


def test_bench_single_cell(tmp_path, capsys):
    cfg = {
        "sim": {"n": 40, "d1": 3, "d2": 3, "d3": 2, "r": 1},
        "estimator": {"loss": "squared", "penalty": "mcp", "folds": 2, "lambda_grid": [0.05, 0.2], "solver": {"max_iter": 50}},
        "replications": 2,
    }
    cfg_path = tmp_path / "b.json"
    cfg_path.write_text(json.dumps(cfg))
    assert main(["bench", "--config", str(cfg_path), "--out", str(tmp_path / "b"), "--seed", "1"]) == 0
    rows = io.read_rows(tmp_path / "b" / "bench.csv")
    assert len(rows) == 1 and rows[0]["reps"] == "2" and rows[0]["status"] == "ok"
    assert "Err=" in capsys.readouterr().out


@pytest.mark.skipif(shutil.which("tubalreg") is None, reason="console script not installed")
def test_console_script(tmp_path):
    cfg = write_cfg(tmp_path / "c.yaml", MINIMAL)
    proc = subprocess.run(["tubalreg", "simulate", "--config", cfg, "--out", str(tmp_path / "a")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr


def test_module_invocation_log_level(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "tubalreg.cli", "trace-plot", str(tmp_path / "none.csv")],
        capture_output=True,
        text=True,
        env={"TUBALREG_LOG": "debug", "PATH": ""},
    )
    assert proc.returncode == 2 and "error" in proc.stderr
