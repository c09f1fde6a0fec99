"""Exception types raised across the package."""


class PloddError(Exception):
    """Base class for all package errors."""


class SequenceValidationError(PloddError, ValueError):
    """A list of pulse instants does not describe a valid sequence."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InvalidExponent(PloddError, ValueError):
    """The spectral exponent is not strictly positive."""


class InfeasibleExponent(InvalidExponent):
    """No sequence of the requested size can make the integral converge."""


class DivergentIntegral(PloddError, ArithmeticError):
    """The decoherence integral diverges in the infrared (alpha >= 2m+2)."""

    def __init__(self, alpha, m):
        super().__init__(
            f"divergent: alpha >= 2m+2 (alpha={alpha:g}, m={m}, need alpha < {2 * m + 2})"
        )
        self.alpha = alpha
        self.m = m


class NonConvergence(PloddError, RuntimeError):
    """An iterative solver or quadrature failed to reach its tolerance.

    ``best`` carries the best iterate found, when there is one.
    """

    def __init__(self, message, best=None, alpha=None):
        super().__init__(message)
        self.best = best
        self.alpha = alpha


class OrderingViolation(NonConvergence):
    """A Newton step could not be damped back into the ordered simplex."""


class InsufficientData(PloddError, ValueError):
    """Too few usable rows for a regression."""


class MismatchedLength(PloddError, ValueError):
    """Two sequences with different pulse counts were compared."""


class ResolutionWarning(RuntimeWarning):
    """A prefactor is smaller than its float64 rounding bound, so its sign is not resolved."""
