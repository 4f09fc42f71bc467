"""Iteratively reweighted proximal gradient solver.

Each outer iteration linearizes the concave singular-value penalty at the
current iterate (weights ``w_ij = rho'(sigma_ij)``), majorizes the risk by a
quadratic with curvature ``eta`` and solves the resulting weighted tubal
nuclear norm proximal problem in closed form by weighted singular value
thresholding of every Fourier slice. ``eta`` starts from a Barzilai-Borwein
estimate and is multiplied by ``kappa`` until the sufficient-decrease test

    F(B_next) + alpha/2 * eta * ||B_next - B_k||^2 <= F(B_k)

passes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg

from . import loss as losses
from .errors import (
    BadParameter,
    DimMismatch,
    NegativeSingularValue,
    NegativeWeight,
    WeightOrderViolation,
)
from .loss import Dataset, LossSpec
from .penalty import PenaltySpec
from .tensor import (
    as_tensor3,
    fourier_singular_values,
    is_self_conjugate,
    penalty_from_sigma,
    slice_svd,
    unique_slices,
)

log = logging.getLogger(__name__)

# absolute slack on the sufficient-decrease test, relative to |F(B_k)|;
# without it the test can fail on rounding alone once iterates stagnate
MSC_RTOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    eta0: float = 1.0
    kappa: float = 2.0
    alpha: float = 1e-4
    eps_tol: float = 1e-6
    max_iter: int = 500
    max_backtrack: int = 60
    eta_min: float = 1e-8
    eta_max: float = 1e12

    def __post_init__(self):
        if not self.eta0 > 0:
            raise BadParameter("eta0 must be positive")
        if not self.kappa > 1:
            raise BadParameter("kappa must exceed 1")
        if not 0 < self.alpha < 1:
            raise BadParameter("alpha must lie in (0, 1)")
        if not self.eps_tol > 0:
            raise BadParameter("eps_tol must be positive")
        if self.max_iter < 1 or self.max_backtrack < 0:
            raise BadParameter("max_iter must be >= 1 and max_backtrack >= 0")
        if not 0 < self.eta_min < self.eta_max:
            raise BadParameter("need 0 < eta_min < eta_max")


class IterRecord(NamedTuple):
    iter: int
    objective: float
    eta: float
    increment_norm: float
    backtracks: int


@dataclass(frozen=True)
class FitResult:
    B_hat: np.ndarray
    trace: tuple[IterRecord, ...]
    iterations: int
    converged: bool
    stalled: bool = False
    sigma: np.ndarray | None = field(default=None, repr=False)

    @property
    def objective(self) -> float:
        return self.trace[-1].objective

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.trace])


class StepResult(NamedTuple):
    B_next: np.ndarray
    eta: float
    backtracks: int
    exhausted: bool
    objective: float
    sigma: np.ndarray
    scores: np.ndarray


def weights_from_singulars(sigma, p: PenaltySpec) -> np.ndarray:
    """Reweighting ``w_ij = rho'(sigma_ij)``; nondecreasing down each column
    because ``rho'`` is nonincreasing."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise NegativeSingularValue("singular values must be nonnegative")
    return np.asarray(p.derivative(sigma), dtype=float)


def _check_weights(W: np.ndarray, shape) -> None:
    if W.shape != shape:
        raise DimMismatch(f"weights shape {W.shape} != {shape}")
    if np.any(W < 0):
        raise NegativeWeight("weights must be nonnegative")
    if W.shape[0] > 1 and np.any(np.diff(W, axis=0) < -1e-12):
        raise WeightOrderViolation("weight columns must be nondecreasing")


def _shrink(G: np.ndarray, W: np.ndarray, inv_eta: float) -> tuple[np.ndarray, np.ndarray]:
    d1, d2, d3 = G.shape
    F = np.fft.fft(G, axis=2)
    out = np.zeros_like(F)
    sigma = np.zeros((min(d1, d2), d3))
    for j in unique_slices(d3):
        real = is_self_conjugate(j, d3)
        u, s, vh = slice_svd(F[:, :, j], j, real)
        s = np.maximum(s - inv_eta * W[:, j], 0.0)
        keep = int(np.count_nonzero(s))
        sigma[:, j] = s
        if keep:
            out[:, :, j] = (u[:, :keep] * s[:keep]) @ vh[:keep]
        if not real:
            out[:, :, d3 - j] = np.conj(out[:, :, j])
            sigma[:, d3 - j] = s
    return np.ascontiguousarray(np.fft.ifft(out, axis=2).real), sigma


def weighted_tsvt(G, W, inv_eta: float) -> np.ndarray:
    """Weighted tensor singular value thresholding.

    Shrinks every Fourier singular value of ``G`` to
    ``max(sigma_ij - inv_eta * w_ij, 0)`` and recomposes with the singular
    vectors of ``G``. With column-monotone weights this is the exact
    minimizer of ``inv_eta * ||B||_{W,*} + 0.5 * ||B - G||_F^2``.
    """
    G = as_tensor3(G, "G")
    W = np.asarray(W, dtype=float)
    _check_weights(W, (min(G.shape[:2]), G.shape[2]))
    if not inv_eta > 0:
        raise BadParameter("inv_eta must be positive")
    return _shrink(G, W, inv_eta)[0]


def bb_init(B_k, B_prev, g_k, g_prev, cfg: SolverConfig, fallback: float | None = None) -> float:
    """Barzilai-Borwein curvature ``<dB, dg> / <dB, dB>`` clamped to
    ``[eta_min, eta_max]``; degenerate ratios return ``fallback``."""
    fallback = cfg.eta0 if fallback is None else fallback
    if B_prev is None or g_prev is None:
        return fallback
    d1 = (np.asarray(B_k) - np.asarray(B_prev)).ravel()
    d2 = (np.asarray(g_k) - np.asarray(g_prev)).ravel()
    den = float(d1 @ d1)
    if den == 0.0:
        return fallback
    ratio = float(d1 @ d2) / den
    if not math.isfinite(ratio) or ratio <= 0:
        return fallback
    return min(max(ratio, cfg.eta_min), cfg.eta_max)


def objective(B, loss: LossSpec, data: Dataset, p: PenaltySpec) -> float:
    """``L_n(B) + rho_lambda(B)``."""
    return losses.risk(loss, B, data) + penalty_from_sigma(fourier_singular_values(B), p)


class _Problem:
    """Loss, data and penalty bundled with the flattened design matrix."""

    def __init__(self, loss: LossSpec, data: Dataset, penalty: PenaltySpec):
        self.loss = loss
        self.data = data
        self.penalty = penalty
        self.X = data.design
        self.y = data.y
        self.shape = data.dims

    def scores(self, B):
        return self.X @ B.ravel()

    def risk(self, s):
        return losses.risk_from_scores(self.loss, s, self.y)

    def grad(self, s):
        g = losses.score_derivative(self.loss, s, self.y)
        return (self.X.T @ g / self.data.n).reshape(self.shape)

    def step(self, B, F, g, sigma, eta, cfg: SolverConfig) -> StepResult:
        W = weights_from_singulars(sigma, self.penalty)
        slack = MSC_RTOL * max(1.0, abs(F))
        best = None
        for b in range(cfg.max_backtrack + 1):
            cand, sig = _shrink(B - g / eta, W, 1.0 / eta)
            s = self.scores(cand)
            F_cand = self.risk(s) + penalty_from_sigma(sig, self.penalty)
            inc2 = float(np.sum((cand - B) ** 2))
            if math.isfinite(F_cand) and F_cand + 0.5 * cfg.alpha * eta * inc2 <= F + slack:
                return StepResult(cand, eta, b, False, F_cand, sig, s)
            if best is None or F_cand < best.objective:
                best = StepResult(cand, eta, b, True, F_cand, sig, s)
            eta *= cfg.kappa
        return best


def step(B_k, sigma_k, eta_init, loss: LossSpec, data: Dataset, p: PenaltySpec, cfg: SolverConfig | None = None) -> StepResult:
    """One outer iteration from ``B_k`` with weights taken from ``sigma_k``.

    Returns the first candidate meeting the sufficient-decrease test or,
    with ``exhausted`` set, the best candidate seen once ``max_backtrack``
    increases of ``eta`` have failed.
    """
    cfg = cfg or SolverConfig()
    if not eta_init > 0:
        raise BadParameter("eta_init must be positive")
    B_k = losses.check(loss, B_k, data)
    prob = _Problem(loss, data, p)
    s = prob.scores(B_k)
    F = prob.risk(s) + penalty_from_sigma(fourier_singular_values(B_k), p)
    return prob.step(B_k, F, prob.grad(s), np.asarray(sigma_k, dtype=float), float(eta_init), cfg)


def initial_estimate(loss: LossSpec, data: Dataset, ridge: float = 1e-6) -> np.ndarray:
    """Least-squares start for regression losses, zero for classification.

    The normal equations use the Gram ``X^T X / n``; when it is singular a
    ``ridge`` multiple of the identity is added.
    """
    if loss.is_classification:
        return np.zeros(data.dims)
    X, y, n = data.design, data.y, data.n
    p = X.shape[1]
    if n >= p:
        H = X.T @ X / n
        c = X.T @ y / n
        try:
            b = linalg.cho_solve(linalg.cho_factor(H, check_finite=False), c, check_finite=False)
            if np.all(np.isfinite(b)):
                return b.reshape(data.dims)
        except linalg.LinAlgError:
            pass
        H[np.diag_indices_from(H)] += ridge
        b = linalg.solve(H, c, assume_a="pos", check_finite=False)
    else:
        K = X @ X.T / n
        K[np.diag_indices_from(K)] += ridge
        b = X.T @ linalg.solve(K, y / n, assume_a="pos", check_finite=False)
    return b.reshape(data.dims)


def fit(
    data: Dataset,
    loss: LossSpec,
    p: PenaltySpec,
    cfg: SolverConfig | None = None,
    B_init=None,
) -> FitResult:
    """Run the reweighted proximal gradient iteration to convergence.

    Stops once ``||B_{k+1} - B_k||_F <= eps_tol`` (converged) or after
    ``max_iter`` iterations. A backtracking failure ends the run early with
    ``stalled`` set and the last accepted iterate returned.
    """
    cfg = cfg or SolverConfig()
    B = initial_estimate(loss, data) if B_init is None else np.array(B_init, dtype=float)
    B = losses.check(loss, B, data)
    prob = _Problem(loss, data, p)

    s = prob.scores(B)
    sigma = fourier_singular_values(B)
    F = prob.risk(s) + penalty_from_sigma(sigma, p)
    g = prob.grad(s)
    trace = [IterRecord(0, F, float("nan"), float("nan"), 0)]
    B_prev = g_prev = None
    eta_prev = cfg.eta0
    converged = stalled = False
    k = 0
    while k < cfg.max_iter:
        eta = bb_init(B, B_prev, g, g_prev, cfg, fallback=eta_prev)
        res = prob.step(B, F, g, sigma, eta, cfg)
        if res.exhausted:
            log.warning("backtracking exhausted at iteration %d (eta=%.3g)", k + 1, res.eta)
            stalled = True
            break
        k += 1
        inc = float(np.linalg.norm((res.B_next - B).ravel()))
        B_prev, g_prev = B, g
        B, F, sigma, s = res.B_next, res.objective, res.sigma, res.scores
        g = prob.grad(s)
        eta_prev = res.eta
        trace.append(IterRecord(k, F, res.eta, inc, res.backtracks))
        if inc <= cfg.eps_tol:
            converged = True
            break
    log.debug("fit %s + %s: %d iterations, converged=%s", loss, p, k, converged)
    return FitResult(B_hat=B, trace=tuple(trace), iterations=k, converged=converged, stalled=stalled, sigma=sigma)
