"""Seeded generators for the simulation designs.

Randomness comes from Philox streams keyed by ``(seed, purpose)`` so every
quantity (coefficients, predictors, noise, label flips, corruption) has its
own reproducible substream.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import BadParameter, DimMismatch, RankTooLarge, TooSmall
from .loss import Dataset, sigmoid
from .tensor import dft3, idft3, is_self_conjugate, slice_svd, tprod, unique_slices

_PURPOSES = {
    "coef": 1,
    "predictors": 2,
    "noise": 3,
    "labels": 4,
    "misspec": 5,
    "corrupt": 6,
    "folds": 7,
    "init": 8,
}


def rng(seed: int, purpose: str = "coef", *extra: int) -> np.random.Generator:
    """Philox generator for a named substream of ``seed``."""
    key = (_PURPOSES[purpose], *extra)
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    sd: float = 1.0
    df: float = 3.0
    scale: float = 3.0
    shape: float = 2.0

    def __post_init__(self):
        kind = {"normal": "gaussian", "t": "studentt", "student": "studentt"}.get(self.kind.lower(), self.kind.lower())
        if kind not in ("gaussian", "studentt", "pareto"):
            raise BadParameter(f"unknown noise kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "gaussian" and not self.sd >= 0:
            raise BadParameter("gaussian sd must be >= 0")
        if kind == "studentt" and not self.df > 0:
            raise BadParameter("t degrees of freedom must be > 0")
        if kind == "pareto" and not (self.scale > 0 and self.shape > 0):
            raise BadParameter("pareto scale and shape must be > 0")

    def label(self) -> str:
        if self.kind == "gaussian":
            return f"N(0,{self.sd:g})"
        if self.kind == "studentt":
            return f"t({self.df:g})"
        return f"Par({self.scale:g},{self.shape:g})"


@dataclass(frozen=True)
class SimSpec:
    n: int = 2000
    d1: int = 20
    d2: int = 20
    d3: int = 3
    r: int = 2
    design: str = "linear"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    misspec_pm: float = 0.0
    corrupt_pn: float = 0.0
    corrupt_pc: float = 0.0
    shape: str | None = None
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseSpec(**self.noise))
        design = self.design.lower()
        if design not in ("linear", "hetero", "logistic"):
            raise BadParameter(f"design must be linear, hetero or logistic, got {self.design!r}")
        object.__setattr__(self, "design", design)
        for name in ("n", "d1", "d2", "d3"):
            if int(getattr(self, name)) < 1:
                raise BadParameter(f"{name} must be a positive integer")
        if self.shape is None and not 1 <= self.r <= min(self.d1, self.d2):
            raise RankTooLarge(f"r must lie in [1, min(d1, d2)] = [1, {min(self.d1, self.d2)}], got r={self.r}")
        for name in ("misspec_pm", "corrupt_pn", "corrupt_pc"):
            if not 0 <= getattr(self, name) <= 100:
                raise BadParameter(f"{name} must be a percentage in [0, 100]")
        if self.shape is not None:
            if self.shape.lower() not in SHAPES:
                raise BadParameter(f"shape must be one of {SHAPES}")
            if self.d1 != self.d2:
                raise BadParameter("shape coefficients need d1 == d2")

    def to_dict(self) -> dict:
        return asdict(self)


def gen_lowrank_coef(d1: int, d2: int, d3: int, r: int, seed: int) -> np.ndarray:
    """``C1 * C2`` with standard Gaussian factors of inner dimension ``r``."""
    if not 1 <= r <= min(d1, d2):
        raise RankTooLarge(f"r={r} exceeds min(d1, d2)={min(d1, d2)}")
    g = rng(seed, "coef")
    C1 = g.standard_normal((d1, r, d3))
    C2 = g.standard_normal((r, d2, d3))
    return tprod(C1, C2)


def gen_logistic_coef(d1: int, d2: int, d3: int, r: int, seed: int, rel_tol: float = 1e-8) -> np.ndarray:
    """Low-tubal-rank coefficient whose nonzero Fourier singular values all equal 1."""
    F = dft3(gen_lowrank_coef(d1, d2, d3, r, seed))
    svds = {j: slice_svd(F[:, :, j], j, is_self_conjugate(j, d3)) for j in unique_slices(d3)}
    smax = max(s.max() for _, s, _ in svds.values())
    out = np.zeros_like(F)
    for j, (u, s, vh) in svds.items():
        keep = s > rel_tol * smax
        out[:, :, j] = u[:, keep] @ vh[keep]
        if not is_self_conjugate(j, d3):
            out[:, :, d3 - j] = np.conj(out[:, :, j])
    return idft3(out)


def sample_noise(noise: NoiseSpec, count: int, seed: int, g: np.random.Generator | None = None) -> np.ndarray:
    if count < 1:
        raise BadParameter("count must be >= 1")
    g = g or rng(seed, "noise")
    if noise.kind == "gaussian":
        return noise.sd * g.standard_normal(count)
    if noise.kind == "studentt":
        return g.standard_t(noise.df, count)
    # classical (type I) Pareto: support [scale, inf)
    return noise.scale * (1.0 + g.pareto(noise.shape, count))


def gen_dataset(spec: SimSpec, B0: np.ndarray, seed: int | None = None) -> Dataset:
    """Draw predictors and responses for ``spec`` around coefficient ``B0``.

    Label flips (class 0 to 1 with probability ``misspec_pm`` percent) come
    before predictor corruption.
    """
    seed = spec.seed if seed is None else seed
    B0 = np.asarray(B0, dtype=float)
    dims = (spec.d1, spec.d2, spec.d3)
    if B0.shape != dims:
        raise DimMismatch(f"B0 shape {B0.shape} != {dims}")
    n = spec.n
    X = rng(seed, "predictors").standard_normal((n, *dims))
    s = X.reshape(n, -1) @ B0.ravel()
    if spec.design == "logistic":
        y = (rng(seed, "labels").random(n) < sigmoid(s)).astype(float)
        if spec.misspec_pm > 0:
            flip = rng(seed, "misspec").random(n) < spec.misspec_pm / 100.0
            y[(y == 0) & flip] = 1.0
    else:
        eps = sample_noise(spec.noise, n, seed)
        if spec.design == "hetero":
            eps = (1.0 + np.abs(X[:, 0, 0, 0])) * eps
        y = s + eps
    if spec.corrupt_pn > 0 and spec.corrupt_pc > 0:
        g = rng(seed, "corrupt")
        n_rows = math.ceil(spec.corrupt_pn / 100.0 * n - 1e-9)
        p = int(np.prod(dims))
        n_entries = math.ceil(spec.corrupt_pc / 100.0 * p - 1e-9)
        flat = X.reshape(n, p)
        for i in np.sort(g.choice(n, size=n_rows, replace=False)):
            idx = g.choice(p, size=n_entries, replace=False)
            flat[i, idx] = 3.0 * (1.0 + g.pareto(2.0, n_entries))
    return Dataset(X, y)


SHAPES = ("cross", "square", "t")


def gen_shape_coef(shape: str, d: int, d3: int) -> np.ndarray:
    """Binary geometric mask on a d x d grid replicated over ``d3`` slices."""
    if d < 8:
        raise TooSmall(f"shape coefficients need d >= 8, got {d}")
    shape = shape.lower()
    w = math.ceil(d / 10)
    if (d - w) % 2:
        w += 1  # keeps the cross exactly centered
    M = np.zeros((d, d))
    lo = (d - w) // 2
    if shape == "cross":
        M[lo : lo + w, :] = 1
        M[:, lo : lo + w] = 1
    elif shape == "square":
        a = d // 4
        M[a : d - a, a : d - a] = 1
        M[a + w : d - a - w, a + w : d - a - w] = 0
    elif shape == "t":
        top = d // 5
        M[top : top + w, top : d - top] = 1
        M[top : d - top, lo : lo + w] = 1
    else:
        raise BadParameter(f"unknown shape {shape!r}; expected one of {SHAPES}")
    return np.repeat(M[:, :, None], d3, axis=2)


def true_coefficient(spec: SimSpec) -> np.ndarray:
    """Ground-truth coefficient implied by ``spec``."""
    if spec.shape is not None:
        return gen_shape_coef(spec.shape, spec.d1, spec.d3)
    if spec.design == "logistic":
        return gen_logistic_coef(spec.d1, spec.d2, spec.d3, spec.r, spec.seed)
    return gen_lowrank_coef(spec.d1, spec.d2, spec.d3, spec.r, spec.seed)


def simulate(spec: SimSpec) -> tuple[np.ndarray, Dataset]:
    B0 = true_coefficient(spec)
    return B0, gen_dataset(spec, B0)
