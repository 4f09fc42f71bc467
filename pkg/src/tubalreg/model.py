"""Estimator facade: K-fold cross-validation over tuning grids and evaluation.

Selection rule: for every grid point the validation criterion is the mean,
over held-out samples, of the loss being fit. When the robustification
parameter is tuned jointly, every candidate is scored with the same
reference value of it (the grid center); scoring each candidate with its own
parameter would always favour the smallest one, since a smaller cutoff
shrinks the loss itself.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import loss as losses
from .datagen import rng
from .errors import BadParameter, DimMismatch, EmptyGrid, FoldTooSmall, TubalRegError
from .loss import Dataset, LossSpec
from .penalty import PenaltySpec
from .solver import FitResult, SolverConfig, fit, initial_estimate
from .tensor import fro_norm, tubal_rank, ttnn

log = logging.getLogger(__name__)

# relative gap under which two mean criteria count as tied
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class EstimatorSpec:
    loss: LossSpec
    penalty: str
    lambda_grid: tuple[float, ...]
    gamma: float | None = None
    robustification_grid: tuple[float, ...] | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        lam = tuple(float(v) for v in self.lambda_grid)
        if not lam:
            raise EmptyGrid("lambda grid is empty")
        if any(not (math.isfinite(v) and v > 0) for v in lam):
            raise BadParameter("lambda grid values must be finite and > 0")
        object.__setattr__(self, "lambda_grid", lam)
        rob = self.robustification_grid
        if rob is not None:
            rob = tuple(float(v) for v in rob)
            if self.loss.robust_param is None:
                rob = None
            elif not rob:
                raise EmptyGrid("robustification grid is empty")
            elif any(not (math.isfinite(v) and v > 0) for v in rob):
                raise BadParameter("robustification values must be finite and > 0")
        object.__setattr__(self, "robustification_grid", rob)
        if int(self.folds) < 2:
            raise FoldTooSmall(f"need at least 2 folds, got {self.folds}")
        # validates kind and gamma once, up front
        self.penalty_spec(lam[0])

    def penalty_spec(self, lam: float) -> PenaltySpec:
        return PenaltySpec(self.penalty, lam, self.gamma)

    def rob_values(self) -> tuple[float | None, ...]:
        if self.robustification_grid is None:
            return (self.loss.robustification,)
        return self.robustification_grid

    def reference_loss(self) -> LossSpec:
        """Loss used to score validation folds."""
        vals = self.rob_values()
        if vals[0] is None:
            return self.loss
        ordered = sorted(vals)
        return self.loss.with_robustification(ordered[(len(ordered) - 1) // 2])


class CvRow(NamedTuple):
    lam: float
    robustification: float | None
    fold: int
    criterion: float
    mean_criterion: float
    selected: bool


class CvResult(NamedTuple):
    lam: float
    robustification: float | None
    table: tuple[CvRow, ...]


def fold_ids(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold label of every sample: a seeded permutation cut into near-equal parts."""
    if folds < 2 or folds > n:
        raise FoldTooSmall(f"folds must lie in [2, n={n}], got {folds}")
    perm = rng(seed, "folds").permutation(n)
    ids = np.empty(n, dtype=int)
    ids[perm] = np.arange(n) % folds
    return ids


def _select(means: dict) -> tuple:
    """Key with the smallest mean; ties go to the larger lambda, then the
    larger robustification value."""
    finite = {k: v for k, v in means.items() if math.isfinite(v)}
    pool = finite or means
    best = min(pool.values())
    tol = TIE_RTOL * max(1.0, abs(best)) if math.isfinite(best) else 0.0
    tied = [k for k, v in pool.items() if v <= best + tol or v == best]
    return max(tied, key=lambda k: (k[0], -math.inf if k[1] is None else k[1]))


def cross_validate(data: Dataset, spec: EstimatorSpec) -> CvResult:
    n = data.n
    ids = fold_ids(n, int(spec.folds), spec.seed)
    ref = spec.reference_loss()
    keys = [(lam, rob) for lam in spec.lambda_grid for rob in spec.rob_values()]
    scores: dict[tuple, list[float]] = {k: [] for k in keys}
    for f in range(int(spec.folds)):
        train = data.subset(np.flatnonzero(ids != f))
        valid = data.subset(np.flatnonzero(ids == f))
        if train.n < 1 or valid.n < 1:
            raise FoldTooSmall(f"fold {f} leaves an empty training or validation set")
        B_init = initial_estimate(spec.loss, train)
        for lam, rob in keys:
            loss = spec.loss.with_robustification(rob)
            try:
                res = fit(train, loss, spec.penalty_spec(lam), spec.solver, B_init=B_init)
                crit = losses.risk(ref, res.B_hat, valid)
            except (TubalRegError, np.linalg.LinAlgError) as exc:
                log.warning("cv fit failed (lambda=%g, fold=%d): %s", lam, f, exc)
                crit = math.inf
            scores[(lam, rob)].append(float(crit))
    means = {k: float(np.mean(v)) for k, v in scores.items()}
    chosen = _select(means)
    rows = []
    for k in sorted(keys, key=lambda k: (k[0], -math.inf if k[1] is None else k[1])):
        for f, c in enumerate(scores[k]):
            rows.append(CvRow(k[0], k[1], f, c, means[k], k == chosen))
    return CvResult(chosen[0], chosen[1], tuple(rows))


def cv_table_rows(table: Sequence[CvRow]) -> list[tuple]:
    return [tuple(r) for r in table]


# default tuning grids -----------------------------------------------------


def residual_scale(data: Dataset, loss: LossSpec) -> float:
    """Robust noise scale: 1.4826 times the median absolute residual of the
    least-squares start, inflated by ``1/sqrt(1 - p/n)`` for the in-sample
    shrinkage of residuals. Classification losses return 1."""
    if loss.is_classification:
        return 1.0
    r = _start_residuals(data)
    if r is None:
        r = data.y - np.median(data.y)
    s = 1.4826 * float(np.median(np.abs(r)))
    return s if s > 0 else 1.0


def _start_residuals(data: Dataset) -> np.ndarray | None:
    n, p = data.design.shape
    if n <= p + 1:
        return None
    r = data.y - data.design @ initial_estimate(LossSpec("squared"), data).ravel()
    return r / math.sqrt(1.0 - p / n)


def _max_slice_sv(G: np.ndarray) -> float:
    d3 = G.shape[2]
    F = np.fft.fft(G, axis=2)
    return max(float(np.linalg.norm(F[:, :, j], 2)) for j in range(d3 // 2 + 1))


def noise_level(data: Dataset, loss: LossSpec, draws: int = 20, seed: int = 0) -> float:
    """Multiplier-bootstrap estimate of the dual (largest Fourier-slice
    singular value) norm of the risk gradient at the truth.

    Per-sample score derivatives are taken at the least-squares start
    (regression, with inflated residuals) or at zero (classification) and
    multiplied by Rademacher signs; the median over ``draws`` is returned.
    """
    r = None if loss.is_classification else _start_residuals(data)
    if loss.is_classification:
        g = losses.score_derivative(loss, np.zeros(data.n), data.y)
    else:
        if r is None:
            r = residual_scale(data, loss) * rng(seed, "init").standard_normal(data.n)
        g = losses.score_derivative(loss, data.y - r, data.y)
    signs = rng(seed, "init", 1).choice((-1.0, 1.0), size=(draws, data.n))
    G = (signs * g) @ data.design / data.n
    vals = [_max_slice_sv(Gb.reshape(data.dims)) for Gb in G]
    level = float(np.median(vals))
    return level if level > 0 else 1.0


def default_lambda_grid(data: Dataset, loss: LossSpec, level: float | None = None, steps=range(0, 6)) -> tuple[float, ...]:
    """Half-octave grid from the noise gradient level upwards, the range in
    which lambda dominates the gradient noise."""
    level = noise_level(data, loss) if level is None else level
    return tuple(level * 2.0 ** (k / 2) for k in steps)


def default_robustification_grid(data: Dataset, loss: LossSpec, scale: float | None = None) -> tuple[float, ...] | None:
    """Huber: adaptive cutoff (``delta = 1``) times 1/4, 1 and 4.
    C-loss: the residual scale times 1, 3 and 9; below the noise scale the
    loss is nonconcave over most residuals and fits from the least-squares
    start stall far from the truth."""
    if loss.robust_param is None:
        return None
    s = residual_scale(data, loss) if scale is None else scale
    if loss.kind == "huber":
        d1, d2, d3 = data.dims
        center = losses.adaptive_huber_upsilon(data.n, max(d1, d2), d3, delta=1.0, c_delta=s / 4)
        return (center / 4, center, center * 4)
    return (s, 3 * s, 9 * s)


def default_spec(
    data: Dataset,
    loss: str | LossSpec,
    penalty: str,
    gamma: float | None = None,
    solver: SolverConfig | None = None,
    folds: int = 5,
    seed: int = 0,
) -> EstimatorSpec:
    if isinstance(loss, str):
        kind = losses.canonical_kind(loss)
        # placeholder robustification, replaced by the grid center below
        loss = LossSpec(kind, **{"huber": {"upsilon": 1.0}, "closs": {"sigma": 1.0}}.get(kind, {}))
    s = residual_scale(data, loss)
    rob = default_robustification_grid(data, loss, s)
    if rob is not None:
        loss = loss.with_robustification(sorted(rob)[(len(rob) - 1) // 2])
    return EstimatorSpec(
        loss=loss,
        penalty=penalty,
        gamma=gamma,
        lambda_grid=tuple(v / unit_slope(penalty, gamma) for v in default_lambda_grid(data, loss)),
        robustification_grid=rob,
        solver=solver or SolverConfig(),
        folds=folds,
        seed=seed,
    )


def unit_slope(kind: str, gamma: float | None = None) -> float:
    """Slope at 0+ of the penalty with lambda = 1. Dividing a grid by it makes
    the largest per-singular-value weight equal across penalty kinds."""
    return PenaltySpec(kind, 1.0, gamma).constants().c_rho_prime


class TunedFit(NamedTuple):
    result: FitResult
    loss: LossSpec
    penalty: PenaltySpec
    cv: CvResult


def fit_cv(data: Dataset, spec: EstimatorSpec) -> TunedFit:
    """Cross-validate, then refit on all of ``data`` at the selected point."""
    cv = cross_validate(data, spec)
    loss = spec.loss.with_robustification(cv.robustification)
    pen = spec.penalty_spec(cv.lam)
    return TunedFit(fit(data, loss, pen, spec.solver), loss, pen, cv)


# evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    err: float
    log_err: float
    nuc_err: float
    r_hat: int
    accuracy: float | None
    pe: float

    def as_dict(self) -> dict:
        return {
            "err": self.err,
            "log_err": self.log_err,
            "nuc_err": self.nuc_err,
            "r_hat": self.r_hat,
            "accuracy": self.accuracy,
            "pe": self.pe,
        }


def evaluate(B_hat, B0, test: Dataset, loss: LossSpec, rank_tol: float = 1e-8) -> EvalReport:
    """Error norms, estimated tubal rank, accuracy (classification) and the
    symmetrized gradient gap ``<L'(B_hat) - L'(B0), B_hat - B0>`` on ``test``."""
    B_hat = np.asarray(B_hat, dtype=float)
    B0 = np.asarray(B0, dtype=float)
    if B_hat.shape != B0.shape:
        raise DimMismatch(f"estimate shape {B_hat.shape} != truth shape {B0.shape}")
    diff = B_hat - B0
    err = fro_norm(diff)
    acc = None
    if loss.is_classification:
        labels = losses.predict(loss, B_hat, test.X)
        acc = 100.0 * float(np.mean(np.atleast_1d(labels) == test.y))
    return EvalReport(
        err=err,
        log_err=math.log(err) if err > 0 else -math.inf,
        nuc_err=ttnn(diff),
        r_hat=tubal_rank(B_hat, rank_tol),
        accuracy=acc,
        pe=losses.prediction_error(loss, B_hat, B0, test),
    )
