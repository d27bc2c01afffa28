"""
Coefficient field abstraction.

An affine parametric coefficient ``a(x, y) = a_0(x) + Σ_m y_m a_m(x)``.
Concrete families live in :mod:`app.services.problem_library`.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from app.models.quadrature import QuadratureRule


class CoefficientField(ABC):
    """Spatial coefficient functions ``a_m`` with their admissibility data."""

    #: largest ``m`` with ``a_m ≢ 0``; ``None`` for infinite expansions
    max_active_m: Optional[int] = None
    a0_min: float = 1.0
    a0_max: float = 1.0
    description: str = ""

    @abstractmethod
    def evaluate(self, m: int, x: np.ndarray) -> np.ndarray:
        """Evaluate ``a_m`` at points ``x`` of shape ``(..., 2)``."""

    def is_zero(self, m: int) -> bool:
        """True when ``a_m`` vanishes identically."""
        return self.max_active_m is not None and m > self.max_active_m

    def tau_bound(self) -> Optional[float]:
        """Analytic bound for ``τ`` when one is known, else ``None``."""
        return None

    def truncation(self) -> int:
        """Number of terms used when ``τ`` has to be sampled."""
        return self.max_active_m if self.max_active_m is not None else 200

    def cell_integrals(self, m: int, corners: np.ndarray, quad: QuadratureRule) -> np.ndarray:
        """``∫_T a_m dx`` for every triangle in ``corners`` (shape ``(n, 3, 2)``)."""
        corners = np.asarray(corners, dtype=float)
        if self.is_zero(m) or corners.shape[0] == 0:
            return np.zeros(corners.shape[0])
        points, weights = quad.map_to(corners)
        return np.sum(weights * self.evaluate(m, points), axis=1)
