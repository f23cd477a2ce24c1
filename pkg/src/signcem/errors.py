"""Exception hierarchy shared by all modules."""


class SignCemError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(SignCemError, ValueError):
    """Invalid parameters (mesh sizes, coefficient layouts, experiment configs)."""


class NumericalError(SignCemError, RuntimeError):
    """A numerical step failed (singular system, eigensolver breakdown)."""


class SingularMatrixError(NumericalError):
    """Raised when a factorization hits a pivot that is numerically zero."""

    def __init__(self, message, pivot_index=None):
        super().__init__(message)
        self.pivot_index = pivot_index


class EigenSolverError(NumericalError):
    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class ProvenanceError(SignCemError, ValueError):
    """Basis set and coefficient field do not belong together."""


class UndefinedRatioError(SignCemError, ZeroDivisionError):
    """Relative error requested against a reference with zero norm."""
