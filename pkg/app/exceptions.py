"""
Domain exceptions for the multilevel stochastic Galerkin solver.

Every error raised by the numerical services derives from ``MlsgError``.
Errors that describe invalid input also derive from ``ValueError`` so
callers may catch either.
"""

from __future__ import annotations

from typing import Sequence


class MlsgError(Exception):
    """Base class for all solver errors."""


class ConfigurationError(MlsgError, ValueError):
    """Invalid flags, config file entries or run parameters."""


class MeshError(MlsgError, ValueError):
    """Unsupported domain, degenerate element or invalid marked vertex."""


class OverlayError(MlsgError, ValueError):
    """Two meshes cannot be overlaid (different roots, ambiguous containment)."""


class AssemblyError(MlsgError, ValueError):
    """Dimension mismatch or invalid coefficient during assembly."""


class BasisError(MlsgError, ValueError):
    """Multi-index degree exceeds the recurrence table or is malformed."""


class EstimatorError(MlsgError, RuntimeError):
    """The enriched-space check cannot be performed (size cap, degenerate)."""


class RunRepositoryError(MlsgError, RuntimeError):
    """Run records could not be persisted or read back."""


class SolverConvergenceError(MlsgError, RuntimeError):
    """The Krylov solver did not reach the requested tolerance."""

    def __init__(self, message: str, residual_history: Sequence[float] = ()) -> None:
        super().__init__(message)
        self.residual_history = list(residual_history)

    @property
    def iterations(self) -> int:
        return max(len(self.residual_history) - 1, 0)
