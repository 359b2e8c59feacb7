"""Semantic exception hierarchy shared across the package."""


class GpnnError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(GpnnError, ValueError):
    """A kernel or hyperparameter value violates its contract."""


class ShapeError(GpnnError, ValueError):
    """Array dimensions are inconsistent."""


class SizeError(GpnnError, ValueError):
    """A size constraint (m <= n, dense cap, non-empty input) is violated."""


class EmptyInputError(SizeError):
    """An operation that needs at least one data point got none."""


class NumericError(GpnnError, ArithmeticError):
    """A computation produced non-finite values."""


class ConditioningError(NumericError):
    """Cholesky factorisation failed even after the maximum jitter.

    Carries the largest jitter attempted in ``jitter``.
    """

    def __init__(self, message, jitter):
        super().__init__(message)
        self.jitter = jitter


class UnsupportedBoundError(GpnnError, ValueError):
    """No Euclidean power bound is available for this kernel setting."""


class ExpansionDivergenceError(NumericError):
    """The series inverse does not converge for the supplied matrices."""


class DomainError(GpnnError, ValueError):
    """A numeric argument is outside the formula's domain (e.g. n < m)."""


class ConfigError(GpnnError, ValueError):
    """An experiment configuration is malformed or inconsistent."""


class SolverError(GpnnError, RuntimeError):
    """An iterative solver failed to converge; details in the message."""


class FitError(GpnnError, ValueError):
    """A rate fit cannot be performed (e.g. non-positive excess MSE)."""


class ParseError(GpnnError, ValueError):
    """A data file could not be parsed; row/column context in the message."""
