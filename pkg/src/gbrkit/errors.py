"""Exception types shared across the package.

The CLI maps these onto exit codes: domain problems exit with 2 and
numerical non-convergence exits with 3.
"""


class GbrkitError(Exception):
    """Base class for all package errors."""


class DomainError(GbrkitError, ValueError):
    """Input outside the documented parameter domain."""


class SizeError(DomainError):
    """Requested quadrature size outside the supported range."""


class InfeasibleContourError(DomainError):
    """Pole-ordering constraints that no contour can satisfy."""


class NonConvergenceError(GbrkitError, ArithmeticError):
    """Refinement hit its cap before reaching the requested tolerance."""

    def __init__(self, message, last_values=None):
        super().__init__(message)
        self.last_values = last_values
