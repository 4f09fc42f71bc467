"""Low-tubal-rank tensor regression with nonconvex spectral penalties."""

from .errors import TubalRegError
from .loss import Dataset, LossSpec
from .penalty import PenaltySpec
from .solver import FitResult, SolverConfig, fit

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FitResult",
    "LossSpec",
    "PenaltySpec",
    "SolverConfig",
    "TubalRegError",
    "fit",
]
