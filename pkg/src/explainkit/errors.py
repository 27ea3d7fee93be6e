"""Exception types raised across explainkit."""


class ExplainKitError(Exception):
    """Base class for all explainkit errors."""


class DataError(ExplainKitError):
    """Malformed or inconsistent input data."""


class UndefinedCorrelationError(DataError):
    """Correlation requested for a constant vector."""


class ModelError(ExplainKitError):
    """Training or scoring failure."""


class ConvergenceError(ExplainKitError):
    """Iterative solver hit its sweep limit.

    The last iterate is kept on the exception so callers can inspect or
    reuse it.
    """

    def __init__(self, message, intercept=None, coef=None, sweeps=None):
        super().__init__(message)
        self.intercept = intercept
        self.coef = coef
        self.sweeps = sweeps


class ShapleyGuardError(ExplainKitError):
    """Exact enumeration requested for too many features."""
