"""Scalar singular-value penalties (convex t-TNN plus six nonconvex ones)."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BadParameter, DomainError, NegativeInput

KINDS = ("ttnn", "geman", "scad", "laplace", "mcp", "etp", "logarithm")

DEFAULT_GAMMA = {"scad": 3.7}

_ALIASES = {"t-tnn": "ttnn", "tnn": "ttnn", "log": "logarithm"}


class PenaltyConstants(NamedTuple):
    c_rho_prime: float
    mu: float


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty kind with its level ``lam`` and shape ``gamma``.

    ``gamma`` must exceed 1 (2 for SCAD) and is ignored by ``ttnn``; it
    defaults to 3.7 for SCAD and 2 otherwise. A zero
    ``lam`` is accepted only for ``ttnn``, where it means no regularization.
    """

    kind: str
    lam: float
    gamma: float | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in KINDS:
            raise BadParameter(f"unknown penalty kind {self.kind!r}; expected one of {KINDS}")
        object.__setattr__(self, "kind", kind)
        # gamma has no effect on ttnn; fixing it keeps equal penalties equal
        gamma = DEFAULT_GAMMA.get(kind, 2.0) if self.gamma is None or kind == "ttnn" else self.gamma
        lam, gamma = float(self.lam), float(gamma)
        if not np.isfinite(lam) or lam < 0 or (lam == 0 and kind != "ttnn"):
            raise BadParameter(f"lambda must be > 0, got {self.lam}")
        if kind != "ttnn":
            if not gamma > 1:
                raise BadParameter(f"gamma must be > 1 for {kind}, got {self.gamma}")
            if kind == "scad" and not gamma > 2:
                raise BadParameter(f"SCAD requires gamma > 2, got {self.gamma}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "gamma", gamma)

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(self.kind, lam, self.gamma)

    def value(self, x):
        """Penalty at ``|x|``; elementwise for arrays."""
        x = np.abs(np.asarray(x, dtype=float))
        lam, g = self.lam, self.gamma
        k = self.kind
        if k == "ttnn":
            out = lam * x
        elif k == "geman":
            out = lam * x / (x + g)
        elif k == "scad":
            out = np.where(
                x <= lam,
                lam * x,
                np.where(
                    x <= g * lam,
                    (-x * x + 2 * g * lam * x - lam * lam) / (2 * (g - 1)),
                    lam * lam * (g + 1) / 2,
                ),
            )
        elif k == "laplace":
            out = lam * -np.expm1(-x / g)
        elif k == "mcp":
            out = np.where(x <= g * lam, lam * x - x * x / (2 * g), g * lam * lam / 2)
        elif k == "etp":
            out = lam * -np.expm1(-g * x) / -np.expm1(-g)
        else:
            out = lam * np.log1p(g * x) / np.log1p(g)
        return out if out.ndim else float(out)

    def derivative(self, x):
        """Derivative on ``x >= 0``; at 0 the right limit, at SCAD/MCP kinks
        the left-branch value."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise NegativeInput("penalty derivative is defined for x >= 0")
        lam, g = self.lam, self.gamma
        k = self.kind
        if k == "ttnn":
            out = np.full_like(x, lam)
        elif k == "geman":
            out = lam * g / (x + g) ** 2
        elif k == "scad":
            out = np.where(x <= lam, lam, np.maximum(g * lam - x, 0.0) / (g - 1))
        elif k == "laplace":
            out = lam / g * np.exp(-x / g)
        elif k == "mcp":
            out = np.maximum(lam - x / g, 0.0)
        elif k == "etp":
            out = lam * g * np.exp(-g * x) / -np.expm1(-g)
        else:
            out = lam * g / ((g * x + 1) * np.log1p(g))
        # exact limit at 0, free of the formulas' rounding
        out = np.where(x == 0, self.constants().c_rho_prime, out)
        return out if out.ndim else float(out)

    def constants(self) -> PenaltyConstants:
        """Slope at 0+ and the weak-convexity constant (sup of -rho'')."""
        lam, g = self.lam, self.gamma
        k = self.kind
        if k == "ttnn":
            return PenaltyConstants(lam, 0.0)
        if k == "geman":
            return PenaltyConstants(lam / g, 2 * lam / g**2)
        if k == "scad":
            return PenaltyConstants(lam, 1 / (g - 1))
        if k == "laplace":
            return PenaltyConstants(lam / g, lam / g**2)
        if k == "mcp":
            return PenaltyConstants(lam, 1 / g)
        if k == "etp":
            denom = -np.expm1(-g)
            return PenaltyConstants(lam * g / denom, lam * g**2 / denom)
        return PenaltyConstants(lam * g / np.log1p(g), lam * g**2 / np.log1p(g))

    def __str__(self):
        if self.kind == "ttnn":
            return f"ttnn(lambda={self.lam:g})"
        return f"{self.kind}(lambda={self.lam:g},gamma={self.gamma:g})"


def value(p: PenaltySpec, x):
    return p.value(x)


def dvalue(p: PenaltySpec, x):
    return p.derivative(x)


def constants(p: PenaltySpec) -> PenaltyConstants:
    return p.constants()


def antimonotone_check(p: PenaltySpec, x: float, s: float, slack: float = 1e-12) -> bool:
    """Whether the secant slope on [x, s] lies between rho'(s) and rho'(x)."""
    if not 0 < x < s:
        raise DomainError(f"need 0 < x < s, got x={x}, s={s}")
    vx, vs = p.value(x), p.value(s)
    secant = (vx - vs) / (x - s)
    # cancellation in the secant grows like eps * |rho| / (s - x)
    tol = slack * max(1.0, abs(secant)) + 4 * np.finfo(float).eps * max(abs(vx), abs(vs)) / (s - x)
    return bool(p.derivative(s) - tol <= secant <= p.derivative(x) + tol)


_SPEC_RE = re.compile(r"^\s*([A-Za-z-]+)\s*(?:\((.*)\))?\s*$")


def parse_penalty(text: str) -> PenaltySpec:
    """Parse strings such as ``"mcp(lambda=0.1,gamma=2)"`` or ``"ttnn(0.5)"``."""
    m = _SPEC_RE.match(text)
    if not m:
        raise BadParameter(f"cannot parse penalty {text!r}")
    kind, args = m.group(1), (m.group(2) or "").strip()
    params: dict[str, float] = {}
    positional = []
    for part in filter(None, (a.strip() for a in args.split(","))):
        if "=" in part:
            key, val = (t.strip() for t in part.split("=", 1))
            key = {"lam": "lambda", "l": "lambda", "g": "gamma"}.get(key.lower(), key.lower())
            if key not in ("lambda", "gamma"):
                raise BadParameter(f"unknown penalty parameter {key!r}")
            params[key] = float(val)
        else:
            positional.append(float(part))
    for key, val in zip(("lambda", "gamma"), positional):
        params.setdefault(key, val)
    if "lambda" not in params:
        raise BadParameter(f"penalty {text!r} needs a lambda")
    return PenaltySpec(kind, params["lambda"], params.get("gamma"))
