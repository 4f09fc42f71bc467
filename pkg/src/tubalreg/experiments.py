"""Replicated simulation benchmarks.

A bench config expands into cells (one simulation design plus one estimator)
and every cell runs ``replications`` independent replications. Replication
``k`` draws its data from a seed derived from ``(base_seed, k)`` only, so all
cells in the same design see identical data and comparisons between losses
or penalties are paired.

Finished replications are appended to ``progress.jsonl`` under a file lock;
rerunning the bench skips them, and the aggregate table is always rebuilt
from the progress file in a fixed order.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
from filelock import FileLock

from .datagen import NoiseSpec, SimSpec, gen_dataset, true_coefficient
from .errors import ConfigError, TubalRegError
from .io import write_rows
from .loss import LossSpec, canonical_kind
from .model import EstimatorSpec, default_spec, evaluate, fit_cv
from .solver import SolverConfig

log = logging.getLogger(__name__)

METRICS = ("err", "log_err", "nuc_err", "r_hat", "accuracy", "pe", "lam", "robustification", "iterations")


def replication_seed(base_seed: int, rep: int) -> int:
    ss = np.random.SeedSequence(entropy=int(base_seed) % 2**64, spawn_key=(int(rep),))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


# estimator descriptions ---------------------------------------------------


@dataclass(frozen=True)
class EstimatorConfig:
    """How one model is tuned: loss and penalty kinds plus optional fixed grids."""

    loss: str = "squared"
    penalty: str = "mcp"
    gamma: float | None = None
    lambda_grid: tuple[float, ...] | None = None
    robustification_grid: tuple[float, ...] | None = None
    folds: int = 5
    solver: SolverConfig = SolverConfig()

    def __post_init__(self):
        object.__setattr__(self, "loss", canonical_kind(self.loss))
        if isinstance(self.solver, dict):
            object.__setattr__(self, "solver", SolverConfig(**self.solver))
        for name in ("lambda_grid", "robustification_grid"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, tuple(float(x) for x in v))

    def build(self, data, seed: int) -> EstimatorSpec:
        spec = default_spec(data, self.loss, self.penalty, gamma=self.gamma, solver=self.solver, folds=self.folds, seed=seed)
        if self.lambda_grid is not None:
            spec = replace(spec, lambda_grid=self.lambda_grid)
        if self.robustification_grid is not None and spec.loss.robust_param is not None:
            rob = self.robustification_grid
            spec = replace(spec, loss=spec.loss.with_robustification(sorted(rob)[(len(rob) - 1) // 2]), robustification_grid=rob)
        return spec

    def to_dict(self) -> dict:
        d = asdict(self)
        d["solver"] = asdict(self.solver)
        return d


@dataclass(frozen=True)
class Cell:
    sim: SimSpec
    estimator: EstimatorConfig

    def key(self) -> dict:
        sim = self.sim.to_dict()
        sim.pop("seed")
        return {"sim": sim, "estimator": self.estimator.to_dict()}

    def cell_id(self) -> str:
        blob = json.dumps(self.key(), sort_keys=True, default=float)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def label(self) -> dict:
        s, e = self.sim, self.estimator
        return {
            "design": s.design,
            "noise": s.noise.label(),
            "n": s.n,
            "d1": s.d1,
            "d2": s.d2,
            "d3": s.d3,
            "r": s.r,
            "shape": s.shape or "",
            "misspec_pm": s.misspec_pm,
            "corrupt_pn": s.corrupt_pn,
            "corrupt_pc": s.corrupt_pc,
            "loss": e.loss,
            "penalty": e.penalty,
        }


# config expansion ---------------------------------------------------------

_SIM_KEYS = {f for f in SimSpec.__dataclass_fields__}
_EST_KEYS = {f for f in EstimatorConfig.__dataclass_fields__}


def _split(overrides: dict) -> tuple[dict, dict]:
    sim, est = {}, {}
    for k, v in overrides.items():
        if k in _SIM_KEYS:
            sim[k] = v
        elif k in _EST_KEYS:
            est[k] = v
        else:
            raise ConfigError(f"unknown cell field {k!r}")
    return sim, est


def _make_cell(sim_base: dict, est_base: dict, overrides: dict) -> Cell:
    sim_o, est_o = _split(overrides)
    sim = {**sim_base, **sim_o}
    if isinstance(sim.get("noise"), str):
        sim["noise"] = {"kind": sim["noise"]}
    sim.pop("seed", None)
    try:
        return Cell(SimSpec(**sim), EstimatorConfig(**{**est_base, **est_o}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def expand_cells(config: dict) -> list[Cell]:
    """Cells from ``cells`` (explicit list of overrides) and/or ``grid``
    (Cartesian product of override lists), applied over ``sim`` and
    ``estimator`` defaults. Every cell is validated before anything runs."""
    sim_base = dict(config.get("sim") or {})
    est_base = dict(config.get("estimator") or {})
    overrides = [dict(c) for c in config.get("cells") or []]
    grid = config.get("grid") or {}
    if grid:
        names = sorted(grid)
        values = [v if isinstance(v, list) else [v] for v in (grid[k] for k in names)]
        for combo in itertools.product(*values):
            overrides.append(dict(zip(names, combo)))
    if not overrides:
        overrides = [{}]
    cells = [_make_cell(sim_base, est_base, o) for o in overrides]
    seen = set()
    unique = []
    for c in cells:
        if c.cell_id() not in seen:
            seen.add(c.cell_id())
            unique.append(c)
    return unique


# running ------------------------------------------------------------------


def run_replication(cell: Cell, rep: int, base_seed: int) -> dict[str, Any]:
    """Simulate, cross-validate, refit and evaluate one replication."""
    seed = replication_seed(base_seed, rep)
    sim = replace(cell.sim, seed=seed)
    t0 = time.perf_counter()
    B0 = true_coefficient(sim)
    data = gen_dataset(sim, B0)
    spec = cell.estimator.build(data, seed)
    tuned = fit_cv(data, spec)
    test = data
    if tuned.loss.is_classification:
        # clean, independent test set of the same size
        clean = replace(sim, misspec_pm=0.0, corrupt_pn=0.0, corrupt_pc=0.0)
        test = gen_dataset(clean, B0, seed=replication_seed(seed, 1))
    rep_eval = evaluate(tuned.result.B_hat, B0, test, tuned.loss)
    out = rep_eval.as_dict()
    out.update(
        lam=tuned.cv.lam,
        robustification=tuned.cv.robustification,
        iterations=tuned.result.iterations,
        converged=tuned.result.converged,
        seconds=time.perf_counter() - t0,
    )
    return out


def _task(args):
    cell, rep, base_seed = args
    try:
        return cell.cell_id(), rep, "ok", run_replication(cell, rep, base_seed)
    except (TubalRegError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return cell.cell_id(), rep, f"failed: {type(exc).__name__}: {exc}", {}


def _load_progress(path: Path) -> dict[tuple[str, int], dict]:
    done = {}
    if path.exists():
        text = path.read_text()
        if text and not text.endswith("\n"):
            # drop the torn tail so later appends start on a fresh line
            text = text[: text.rfind("\n") + 1]
            with open(path, "r+") as fh:
                fh.truncate(len(text.encode()))
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue
            done[(rec["cell"], int(rec["rep"]))] = rec
    return done


def _append_progress(path: Path, lock: FileLock, rec: dict) -> None:
    with lock:
        with open(path, "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True, default=float) + "\n")


def _nan_none(v):
    return None if v is None or (isinstance(v, float) and math.isnan(v)) else v


def aggregate(cells: list[Cell], done: dict, replications: int) -> list[dict]:
    rows = []
    for cell in cells:
        cid = cell.cell_id()
        recs = [done.get((cid, k)) for k in range(replications)]
        ok = [r for r in recs if r is not None and r["status"] == "ok"]
        failed = [r for r in recs if r is not None and r["status"] != "ok"]
        missing = sum(r is None for r in recs)
        row = {"cell": cid, **cell.label(), "reps": len(ok)}
        for m in METRICS:
            vals = [r["result"].get(m) for r in ok]
            vals = np.array([v for v in vals if v is not None], dtype=float)
            if vals.size:
                row[f"mean_{m}"] = float(np.mean(vals))
                row[f"se_{m}"] = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan")
            else:
                row[f"mean_{m}"] = row[f"se_{m}"] = None
        row["mean_seconds"] = float(np.mean([r["result"]["seconds"] for r in ok])) if ok else None
        row["status"] = "incomplete" if missing else ("failed" if failed and not ok else ("partial" if failed else "ok"))
        rows.append(row)
    return rows


BENCH_COLUMNS = (
    ("cell", "design", "noise", "n", "d1", "d2", "d3", "r", "shape", "misspec_pm", "corrupt_pn", "corrupt_pc", "loss", "penalty", "reps")
    + tuple(f"{p}_{m}" for m in METRICS for p in ("mean", "se"))
    + ("mean_seconds", "status")
)

# columns excluded from byte-identity comparisons between reruns
TIMING_COLUMNS = ("mean_seconds",)


def run_bench(config: dict, out_dir, jobs: int = 1, base_seed: int | None = None) -> list[dict]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = expand_cells(config)
    reps = int(config.get("replications", 10))
    if reps < 1:
        raise ConfigError("replications must be >= 1")
    base_seed = int(config.get("seed", 0) if base_seed is None else base_seed)
    progress = out_dir / "progress.jsonl"
    lock = FileLock(str(out_dir / "progress.lock"))
    done = _load_progress(progress)
    todo = [(c, k, base_seed) for c in cells for k in range(reps) if (c.cell_id(), k) not in done]
    log.info("bench: %d cells x %d reps, %d to run", len(cells), reps, len(todo))

    def record(res):
        cid, rep, status, result = res
        rec = {"cell": cid, "rep": rep, "status": status, "result": {k: _nan_none(v) for k, v in result.items()}}
        _append_progress(progress, lock, rec)
        done[(cid, rep)] = rec
        log.info("cell %s rep %d: %s", cid, rep, status)

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_task, todo):
                record(res)
    else:
        for t in todo:
            record(_task(t))
    rows = aggregate(cells, done, reps)
    write_rows(out_dir / "bench.csv", BENCH_COLUMNS, rows)
    return rows
