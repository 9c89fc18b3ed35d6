"""Exception types shared across the package."""


class TensormorError(Exception):
    """Base class for all package-specific errors."""


class NumericalBreakdownError(TensormorError):
    """A factorization or solve lost positive definiteness or conditioning.

    Carries the offending pivot index when the failure happened inside a
    Cholesky factorization, and a condition estimate when one is available.
    """

    def __init__(self, message, pivot=None, cond=None):
        super().__init__(message)
        self.pivot = pivot
        self.cond = cond


class CapacityError(TensormorError):
    """A dense materialization would exceed the configured entry cap."""


class DomainError(TensormorError, ValueError):
    """A parameter point lies outside the declared parameter box."""


class DegeneracyError(TensormorError):
    """A greedy or interpolation step hit a (numerically) singular system."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DivergenceError(TensormorError):
    """An iterative solver diverged; a smaller step size may help."""


class UnsupportedCoefficientError(TensormorError, ValueError):
    """A coefficient function does not factorize per parameter dimension."""

    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class ConfigError(TensormorError, ValueError):
    """An experiment configuration failed to parse or validate."""
