"""Empirical risks for tensor-on-scalar regression and their gradients.

Every risk is an average of per-sample terms depending on the score
``s_i = <X_i, B>``, so gradients are ``X^T g / n`` with ``g`` the per-sample
derivative with respect to the score.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BadParameter, DimMismatch, DomainError, NonBinaryLabel
from .tensor import as_tensor3

KINDS = ("squared", "logistic", "huber", "closs", "mdlogistic")
CLASSIFICATION = frozenset({"logistic", "mdlogistic"})

_ALIASES = {
    "lsr": "squared",
    "ls": "squared",
    "lr": "logistic",
    "logisticmle": "logistic",
    "ahr": "huber",
    "cir": "closs",
    "c-loss": "closs",
    "rlr": "mdlogistic",
}


def canonical_kind(kind: str) -> str:
    k = _ALIASES.get(kind.lower(), kind.lower())
    if k not in KINDS:
        raise BadParameter(f"unknown loss kind {kind!r}; expected one of {KINDS}")
    return k


@dataclass(frozen=True)
class LossSpec:
    kind: str
    upsilon: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        kind = canonical_kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind == "huber":
            if self.upsilon is None or not self.upsilon > 0:
                raise BadParameter(f"huber loss needs upsilon > 0, got {self.upsilon}")
        if kind == "closs":
            if self.sigma is None or not self.sigma > 0:
                raise BadParameter(f"C-loss needs sigma > 0, got {self.sigma}")

    @property
    def is_classification(self) -> bool:
        return self.kind in CLASSIFICATION

    @property
    def robust_param(self) -> str | None:
        return {"huber": "upsilon", "closs": "sigma"}.get(self.kind)

    @property
    def robustification(self) -> float | None:
        name = self.robust_param
        return None if name is None else getattr(self, name)

    def with_robustification(self, value: float | None) -> "LossSpec":
        name = self.robust_param
        if name is None or value is None:
            return self
        return LossSpec(self.kind, **{name: float(value)})

    def __str__(self):
        name = self.robust_param
        if name is None:
            return self.kind
        return f"{self.kind}({name}={self.robustification:g})"


@dataclass
class Dataset:
    """``n`` predictor tensors ``X`` of shape (n, d1, d2, d3) and responses ``y``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 3:
            X = X[..., None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.ndim != 4 or X.shape[0] < 1:
            raise DimMismatch(f"X must have shape (n, d1, d2, d3), got {X.shape}")
        if y.shape[0] != X.shape[0]:
            raise DimMismatch(f"{X.shape[0]} predictors but {y.shape[0]} responses")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        self.X = np.ascontiguousarray(X)
        self.y = y

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.X.shape[1:])

    @cached_property
    def design(self) -> np.ndarray:
        """Predictors flattened to an (n, d1*d2*d3) matrix matching ``B.ravel()``."""
        return self.X.reshape(self.n, -1)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])

    def is_binary(self) -> bool:
        return bool(np.all((self.y == 0) | (self.y == 1)))


def sigmoid(s):
    """Logistic function without overflow for large ``|s|``."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    e = np.exp(s[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def check(spec: LossSpec, B: np.ndarray, data: Dataset) -> np.ndarray:
    B = as_tensor3(B, "B")
    if B.shape != data.dims:
        raise DimMismatch(f"coefficient shape {B.shape} != predictor shape {data.dims}")
    if spec.is_classification and not data.is_binary():
        raise NonBinaryLabel(f"{spec.kind} loss needs labels in {{0, 1}}")
    return B


def scores(B: np.ndarray, data: Dataset) -> np.ndarray:
    return data.design @ np.asarray(B, dtype=float).ravel()


def risk_from_scores(spec: LossSpec, s: np.ndarray, y: np.ndarray) -> float:
    k = spec.kind
    if k == "squared":
        return 0.5 * float(np.mean((y - s) ** 2))
    if k == "logistic":
        return float(np.mean(np.logaddexp(0.0, s) - y * s))
    if k == "huber":
        a = np.abs(y - s)
        v = spec.upsilon
        return float(np.mean(np.where(a <= v, 0.5 * a * a, v * a - 0.5 * v * v)))
    if k == "closs":
        sig2 = spec.sigma**2
        return float(sig2 * np.mean(-np.expm1(-((y - s) ** 2) / sig2)))
    return float(np.mean((y - sigmoid(s)) ** 2))


def score_derivative(spec: LossSpec, s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-sample derivative of the loss term with respect to its score."""
    k = spec.kind
    if k == "squared":
        return s - y
    if k == "logistic":
        return sigmoid(s) - y
    if k == "huber":
        return -np.clip(y - s, -spec.upsilon, spec.upsilon)
    if k == "closs":
        r = y - s
        return -2.0 * r * np.exp(-(r * r) / spec.sigma**2)
    p = sigmoid(s)
    return -2.0 * (y - p) * p * (1.0 - p)


def risk(spec: LossSpec, B, data: Dataset) -> float:
    B = check(spec, B, data)
    return risk_from_scores(spec, scores(B, data), data.y)


def gradient(spec: LossSpec, B, data: Dataset) -> np.ndarray:
    B = check(spec, B, data)
    g = score_derivative(spec, scores(B, data), data.y)
    return (data.design.T @ g / data.n).reshape(B.shape)


def adaptive_huber_upsilon(n: int, d: int, d3: int, delta: float = 1.0, c_delta: float = 1.0) -> float:
    """Huber cutoff ``c_delta * (n / (d d3))^(1 / (1 + delta))``."""
    if min(n, d, d3) <= 0 or not 0 < delta <= 1 or not c_delta > 0:
        raise DomainError("need positive n, d, d3, c_delta and delta in (0, 1]")
    return float(c_delta * (n / (d * d3)) ** (1.0 / (1.0 + delta)))


def prediction_error(spec: LossSpec, B_hat, B0, data: Dataset) -> float:
    """``<L_n'(B_hat) - L_n'(B0), B_hat - B0>``."""
    B_hat = check(spec, B_hat, data)
    B0 = check(spec, B0, data)
    diff = gradient(spec, B_hat, data) - gradient(spec, B0, data)
    return float(np.dot(diff.ravel(), (B_hat - B0).ravel()))


def predict(spec: LossSpec, B, X):
    """Score for regression losses, 0/1 label for classification losses.

    ``X`` may be one tensor or a stack of shape (n, d1, d2, d3).
    """
    B = np.asarray(B, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.shape[-B.ndim:] != B.shape:
        raise DimMismatch(f"predictor shape {X.shape} incompatible with {B.shape}")
    s = X.reshape(-1, B.size) @ B.ravel()
    if spec.is_classification:
        out = (sigmoid(s) >= 0.5).astype(float)
    else:
        out = s
    return float(out[0]) if X.shape == B.shape else out
