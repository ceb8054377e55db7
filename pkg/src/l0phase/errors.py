"""Semantic exception hierarchy shared across the package."""

from __future__ import annotations


class L0PhaseError(Exception):
    """Base class for all package-specific errors."""


class DomainError(L0PhaseError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(L0PhaseError, ValueError):
    """A configuration value (order, grid, tolerance) is unusable."""


class DivergentIntegralError(DomainError):
    """The inner Gaussian integral diverges (C - 2A^2 <= 0)."""


class NumericalDomainError(L0PhaseError, ArithmeticError):
    """A numerical evaluation left its valid domain (e.g. log of <= 0).

    Carries the offending node(s) when available.
    """

    def __init__(self, message: str, node=None):
        super().__init__(message)
        self.node = node


class DegenerateSubproblemError(L0PhaseError, ArithmeticError):
    """A least-squares subproblem is rank deficient.

    ``support`` is attached by callers that know which column subset
    produced the degenerate matrix.
    """

    def __init__(self, message: str, support=None):
        super().__init__(message)
        self.support = support


class ConvergenceError(L0PhaseError, RuntimeError):
    """A solver failed to converge; carries the best iterate found."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class SweepError(L0PhaseError, RuntimeError):
    """Too many points of a parameter sweep failed to converge."""


class AmbiguousLandscapeError(L0PhaseError, RuntimeError):
    """Curve classification could not be resolved within tolerance."""
