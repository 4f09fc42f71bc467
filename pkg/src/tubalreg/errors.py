"""Exception hierarchy shared by all modules."""


class TubalRegError(Exception):
    """Base class for every error raised by the package."""


class DimMismatch(TubalRegError, ValueError):
    pass


class SymmetryViolation(TubalRegError, ValueError):
    pass


class SvdFailure(TubalRegError, ArithmeticError):
    def __init__(self, slice_index, message="SVD did not converge"):
        super().__init__(f"{message} (Fourier slice {slice_index})")
        self.slice_index = slice_index


class NegativeWeight(TubalRegError, ValueError):
    pass


class NegativeInput(TubalRegError, ValueError):
    pass


class NegativeSingularValue(TubalRegError, ValueError):
    pass


class WeightOrderViolation(TubalRegError, ValueError):
    pass


class DomainError(TubalRegError, ValueError):
    pass


class NonBinaryLabel(TubalRegError, ValueError):
    pass


class BacktrackExhausted(TubalRegError, ArithmeticError):
    pass


class RankTooLarge(TubalRegError, ValueError):
    pass


class BadParameter(TubalRegError, ValueError):
    pass


class TooSmall(TubalRegError, ValueError):
    pass


class EmptyGrid(TubalRegError, ValueError):
    pass


class FoldTooSmall(TubalRegError, ValueError):
    pass


class ConfigError(TubalRegError, ValueError):
    pass


class TensorFormatError(TubalRegError, ValueError):
    pass


class ParseError(TubalRegError, ValueError):
    pass
