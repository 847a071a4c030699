"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes (usage 1, data 2, numerical 3), so new
errors should subclass one of the three branches rather than raising bare
ValueError from public entry points.
"""


class IlensError(Exception):
    """Base class for all toolkit errors."""


class UsageError(IlensError):
    """Bad invocation: unknown flags, malformed config keys, empty grids."""


class DataError(IlensError, ValueError):
    """Input data violates a contract: shapes, domains, file schemas, caps."""


class NumericalError(IlensError, ArithmeticError):
    """A computation failed numerically (divergence, singular solve, ...)."""


class OptimizationError(NumericalError):
    """Iterative optimization produced a non-finite loss."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class LinearAlgebraError(NumericalError):
    """A dense solve failed; carries a condition-number estimate if known."""

    def __init__(self, message: str, condition_estimate: float | None = None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class DegenerateNormalizerError(NumericalError):
    """Order-1 normalizer is zero; the distribution cannot be normalized."""


class UndefinedSimilarityError(NumericalError):
    """Similarity of two all-zero distributions is undefined."""
