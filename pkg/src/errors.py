class TokenTimingError(Exception):
    """Base class for every error raised by this package."""


class DegenerateInputError(TokenTimingError, ValueError):
    """Raised when a channel or input law has no room to carry information."""


class InvalidDensityError(TokenTimingError, ValueError):
    """Raised when a density violates its construction invariants."""


class InfeasibleRealizationError(TokenTimingError, ValueError):
    """Raised when no permutation maps launches onto the observed arrivals."""


class ConvergenceError(TokenTimingError, RuntimeError):
    """Raised when an iterative solver hits its iteration cap."""

    def __init__(self, message: str, last_capacity: float = float("nan"),
                 weights=None, iterations: int = 0):
        super().__init__(message)
        self.last_capacity = last_capacity
        self.weights = weights
        self.iterations = iterations


class CancellationWarning(RuntimeWarning):
    """An alternating sum lost precision and was recomputed another way."""


class UsageError(TokenTimingError, ValueError):
    """Raised for invalid command-line flags or flag combinations."""
