"""Lifted random-dual analysis and descending-support simulation for
noisy L0-constrained sparse recovery."""

from .dual import (
    DualEvaluation,
    LiftLevel,
    LiftVariables,
    OverlapPoint,
    Signal,
    SystemShape,
    r2_of,
    xi_from_psi,
)

__version__ = "0.1.0"

__all__ = [
    "DualEvaluation",
    "LiftLevel",
    "LiftVariables",
    "OverlapPoint",
    "Signal",
    "SystemShape",
    "r2_of",
    "xi_from_psi",
    "__version__",
]
