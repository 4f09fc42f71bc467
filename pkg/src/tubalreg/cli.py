"""Command-line entry point: ``tubalreg {simulate,fit,cv,bench,trace-plot}``.

Exit codes: 0 success, 1 configuration error, 2 I/O or parse error,
3 numerical failure. ``TUBALREG_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import io
from .datagen import SimSpec, simulate
from .errors import (
    BadParameter,
    ConfigError,
    DimMismatch,
    EmptyGrid,
    FoldTooSmall,
    NonBinaryLabel,
    ParseError,
    RankTooLarge,
    TensorFormatError,
    TooSmall,
    TubalRegError,
)
from .experiments import run_bench
from .loss import LossSpec, canonical_kind
from .model import default_spec, evaluate, fit_cv
from .penalty import PenaltySpec
from .solver import SolverConfig, fit
from .tensor import tubal_rank

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("tubalreg")

_CONFIG_ERRORS = (ConfigError, BadParameter, RankTooLarge, TooSmall, EmptyGrid, FoldTooSmall, NonBinaryLabel, DimMismatch)
_IO_ERRORS = (OSError, ParseError, TensorFormatError)


def load_config(path) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text()
    try:
        cfg = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return cfg


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg.get("out")
    if out is None:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sim_spec(cfg: dict, seed) -> SimSpec:
    sim = dict(cfg.get("sim") or {})
    if isinstance(sim.get("noise"), str):
        sim["noise"] = {"kind": sim["noise"]}
    if seed is not None:
        sim["seed"] = seed
    unknown = set(sim) - set(SimSpec.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown sim fields: {sorted(unknown)}")
    return SimSpec(**sim)


# subcommands --------------------------------------------------------------


def cmd_simulate(args, cfg) -> int:
    spec = _sim_spec(cfg, args.seed)
    out = _out_dir(args, cfg)
    B0, data = simulate(spec)
    io.write_dataset(out / "data", data, layout=cfg.get("layout", "stacked"))
    io.write_tb3(out / "B0.tb3", B0)
    io.write_json(out / "manifest.json", {"sim": spec.to_dict(), "seed": spec.seed, "data": "data", "truth": "B0.tb3"})
    print(f"wrote {data.n} samples of shape {data.dims} to {out}")
    return EXIT_OK


def _resolve(base: Path | None, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() or base is None else base / p


def _load_inputs(cfg: dict, config_path):
    base = Path(config_path).parent if config_path else None
    if "data" not in cfg:
        raise ConfigError("config needs 'data' (a dataset directory)")
    data = io.read_dataset(_resolve(base, cfg["data"]))
    truth = io.read_tb3(_resolve(base, cfg["truth"])) if cfg.get("truth") else None
    test = io.read_dataset(_resolve(base, cfg["test"])) if cfg.get("test") else None
    return data, truth, test


def _estimator(cfg: dict) -> dict:
    est = dict(cfg.get("estimator") or {})
    known = {"loss", "penalty", "lambda", "gamma", "upsilon", "sigma", "solver", "lambda_grid", "robustification_grid", "folds"}
    unknown = set(est) - known
    if unknown:
        raise ConfigError(f"unknown estimator fields: {sorted(unknown)}")
    try:
        est["solver"] = SolverConfig(**(est.get("solver") or {}))
    except TypeError as exc:
        raise ConfigError(f"solver: {exc}") from exc
    return est


def _write_outputs(out: Path, result, loss: LossSpec, penalty: PenaltySpec, truth, data, test, extra=None) -> None:
    io.write_tb3(out / "B_hat.tb3", result.B_hat)
    io.write_trace(out / "trace.csv", result.trace)
    io.write_pgm(out / "B_hat.pgm", result.B_hat)
    row = {
        "loss": str(loss),
        "penalty": str(penalty),
        "iterations": result.iterations,
        "converged": result.converged,
        "stalled": result.stalled,
        "objective": result.objective,
    }
    if extra:
        row.update(extra)
    if truth is not None:
        rep = evaluate(result.B_hat, truth, test or data, loss)
        row.update(rep.as_dict())
    else:
        row["r_hat"] = tubal_rank(result.B_hat)
    cols = list(row)
    io.write_rows(out / "report.csv", cols, [row])


def cmd_fit(args, cfg) -> int:
    data, truth, test = _load_inputs(cfg, args.config)
    est = _estimator(cfg)
    out = _out_dir(args, cfg)
    kind = canonical_kind(est.get("loss", "squared"))
    loss = LossSpec(kind, upsilon=est.get("upsilon"), sigma=est.get("sigma"))
    if "lambda" not in est:
        raise ConfigError("fit needs estimator.lambda (use 'cv' to tune it)")
    penalty = PenaltySpec(est.get("penalty", "mcp"), est["lambda"], est.get("gamma"))
    result = fit(data, loss, penalty, est["solver"])
    _write_outputs(out, result, loss, penalty, truth, data, test)
    print(f"{loss} + {penalty}: {result.iterations} iterations, objective {result.objective:.6g}")
    return EXIT_OK


def cmd_cv(args, cfg) -> int:
    data, truth, test = _load_inputs(cfg, args.config)
    est = _estimator(cfg)
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    spec = default_spec(
        data,
        est.get("loss", "squared"),
        est.get("penalty", "mcp"),
        gamma=est.get("gamma"),
        solver=est["solver"],
        folds=int(est.get("folds", 5)),
        seed=seed,
    )
    if est.get("lambda_grid") is not None:
        spec = replace(spec, lambda_grid=tuple(est["lambda_grid"]))
    if est.get("robustification_grid") is not None and spec.loss.robust_param is not None:
        rob = tuple(float(v) for v in est["robustification_grid"])
        spec = replace(spec, loss=spec.loss.with_robustification(sorted(rob)[(len(rob) - 1) // 2]), robustification_grid=rob)
    tuned = fit_cv(data, spec)
    io.write_rows(out / "cv.csv", io.CV_COLUMNS, [tuple(r) for r in tuned.cv.table])
    _write_outputs(
        out, tuned.result, tuned.loss, tuned.penalty, truth, data, test,
        extra={"lambda": tuned.cv.lam, "robustification": tuned.cv.robustification},
    )
    print(f"selected lambda={tuned.cv.lam:.6g} robustification={tuned.cv.robustification}")
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    out = _out_dir(args, cfg)
    jobs = args.jobs if args.jobs is not None else int(cfg.get("jobs", 1))
    rows = run_bench(cfg, out, jobs=max(1, jobs), base_seed=args.seed)
    for r in rows:
        print(
            f"{r['cell']} {r['noise']:>10} {r['loss']:>10} {r['penalty']:>9} n={r['n']} r={r['r']}: "
            f"Err={_f(r['mean_err'])} r_hat={_f(r['mean_r_hat'])} reps={r['reps']} {r['status']}"
        )
    return EXIT_OK


def _f(v) -> str:
    return "nan" if v is None else f"{v:.4f}"


def cmd_trace_plot(args, cfg) -> int:
    trace = io.read_trace(args.trace)
    out = Path(args.out) if args.out else Path(args.trace).parent
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.trace).stem
    dat = out / f"{stem}.dat"
    inc = trace.get("increment_norm")
    lines = ["# iter objective log10_increment"]
    for i, it in enumerate(trace["iter"]):
        v = inc[i] if inc is not None else np.nan
        logv = np.log10(v) if np.isfinite(v) and v > 0 else np.nan
        lines.append(f"{int(it)} {float(trace['objective'][i])!r} {float(logv)!r}")
    dat.write_text("\n".join(lines) + "\n")
    gp = out / f"{stem}.gp"
    gp.write_text(
        "set terminal pngcairo size 800,500\n"
        f"set output '{stem}.png'\n"
        "set xlabel 'iteration'\nset ylabel 'objective'\nset y2label 'log10 ||B_{k+1} - B_k||'\n"
        "set y2tics\nset key top right\n"
        f"plot '{dat.name}' using 1:2 with linespoints title 'objective', \\\n"
        f"     '{dat.name}' using 1:3 axes x1y2 with lines title 'log10 increment'\n"
    )
    print(f"wrote {len(trace['iter'])} points to {dat}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "cv": cmd_cv,
    "bench": cmd_bench,
    "trace-plot": cmd_trace_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON config file")
    common.add_argument("--seed", type=int, help="base seed (overrides the config)")
    common.add_argument("--jobs", type=int, help="parallel workers for bench")
    common.add_argument("--out", help="output directory")
    p = argparse.ArgumentParser(prog="tubalreg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "fit", "cv", "bench"):
        sub.add_parser(name, parents=[common])
    tp = sub.add_parser("trace-plot", parents=[common])
    tp.add_argument("trace", help="trace.csv written by fit or cv")
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("TUBALREG_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config) if args.command != "trace-plot" else {}
        return COMMANDS[args.command](args, cfg)
    except _IO_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TubalRegError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
