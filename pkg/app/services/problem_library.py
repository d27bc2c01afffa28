"""
Problem Library – benchmark coefficient families and the named problems
the command line can run.

* ``benchmark-square`` / ``benchmark-lshape``: Fourier-mode coefficient
  ``a_m = A m^{-2} cos(2π β₁(m) x₁) cos(2π β₂(m) x₂)`` with
  ``A = 0.9 / ζ(2)``, on the unit square and on the L-shaped domain.
* ``cookie``: nine disjoint disks in the unit square, each switched on by
  its own parameter.

All problems use ``a_0 ≡ 1`` and ``f ≡ 1``.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import zeta

from app.exceptions import ConfigurationError
from app.models.coefficient import CoefficientField
from app.models.problem import (
    DOMAIN_LSHAPE,
    DOMAIN_SQUARE,
    DomainSpec,
    ProblemSpec,
    SpatialFunction,
)
from app.models.quadrature import QuadratureRule
from app.services.assembly_service import validate_coefficient
from app.services.quadrature import collapsed_gauss

logger = logging.getLogger(__name__)

DECAY = 2.0
AMPLITUDE = 0.9 / float(zeta(DECAY))

COOKIE_RADIUS = 1.0 / 8.0
COOKIE_AMPLITUDES: Dict[int, float] = {
    1: 0.5, 3: 0.5, 7: 0.5, 9: 0.5,
    2: 0.7, 4: 0.7, 6: 0.7, 8: 0.7,
    5: 0.9,
}
COOKIE_QUADRATURE_DEGREE = 7


def _ones(x: np.ndarray) -> np.ndarray:
    return np.ones(np.shape(x)[:-1])


# ---------------------------------------------------------------------------
# Fourier-mode benchmark
# ---------------------------------------------------------------------------

def fourier_frequencies(m: int) -> Tuple[int, int]:
    """``(β₁(m), β₂(m))`` from ``k(m) = ⌊-1/2 + sqrt(1/2 + 2m)⌋``."""
    k = int(np.floor(-0.5 + np.sqrt(0.5 + 2.0 * m)))
    beta1 = m - k * (k + 1) // 2
    return beta1, k - beta1


class FourierModeCoefficient(CoefficientField):
    """Infinite expansion; ``‖a_m‖_∞ = A m^{-2}`` and ``τ = A ζ(2) = 0.9``."""

    max_active_m = None
    description = "fourier-modes"

    def evaluate(self, m: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if m == 0:
            return _ones(x)
        beta1, beta2 = fourier_frequencies(m)
        return (AMPLITUDE * m ** -DECAY
                * np.cos(2.0 * np.pi * beta1 * x[..., 0])
                * np.cos(2.0 * np.pi * beta2 * x[..., 1]))

    def tau_bound(self) -> Optional[float]:
        return AMPLITUDE * float(zeta(DECAY)) / self.a0_min

    def truncation(self) -> int:
        # tail Σ_{m>M} A m^-2 < A / M
        return int(np.ceil(AMPLITUDE / 1e-8))


def benchmark_coefficient(m: int) -> SpatialFunction:
    if m < 0:
        raise ConfigurationError(f"Parameter index must be non-negative, got {m}.")
    field = FourierModeCoefficient()
    return lambda x: field.evaluate(m, x)


# ---------------------------------------------------------------------------
# Cookie problem
# ---------------------------------------------------------------------------

def cookie_center(m: int) -> np.ndarray:
    """Center of disk ``D_m``, ``m = i + 3(j - 1)``."""
    i = (m - 1) % 3 + 1
    j = (m - 1) // 3 + 1
    return np.array([(2 * i - 1) / 6.0, (2 * j - 1) / 6.0])


def _segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.einsum("nd,nd->n", p - a, ab) / np.maximum(np.einsum("nd,nd->n", ab, ab), 1e-300)
    closest = a + np.clip(t, 0.0, 1.0)[:, None] * ab
    return np.linalg.norm(p - closest, axis=1)


def point_triangle_distance(point: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Euclidean distance from one point to each triangle (0 when inside)."""
    corners = np.asarray(corners, dtype=float)
    p = np.broadcast_to(np.asarray(point, dtype=float), (corners.shape[0], 2))
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]

    def cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
        return u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]

    d1, d2, d3 = cross(b - a, p - a), cross(c - b, p - b), cross(a - c, p - c)
    inside = ((d1 >= 0) & (d2 >= 0) & (d3 >= 0)) | ((d1 <= 0) & (d2 <= 0) & (d3 <= 0))
    dist = np.minimum(np.minimum(_segment_distance(p, a, b), _segment_distance(p, b, c)),
                      _segment_distance(p, c, a))
    return np.where(inside, 0.0, dist)


class CookieCoefficient(CoefficientField):
    """``a_m = c_m χ_{D_m}`` for ``m = 1..9``; the disks are pairwise disjoint."""

    max_active_m = 9
    description = "cookie"

    def __init__(self, radius: float = COOKIE_RADIUS) -> None:
        self.radius = radius

    def evaluate(self, m: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if m == 0:
            return _ones(x)
        if self.is_zero(m):
            return np.zeros(x.shape[:-1])
        inside = np.linalg.norm(x - cookie_center(m), axis=-1) <= self.radius
        return COOKIE_AMPLITUDES[m] * inside.astype(float)

    def tau_bound(self) -> Optional[float]:
        return max(COOKIE_AMPLITUDES.values()) / self.a0_min

    def cell_integrals(self, m: int, corners: np.ndarray, quad: QuadratureRule) -> np.ndarray:
        """
        Cells inside the disk integrate exactly, cells away from it give
        zero; only cells cut by the circle are sampled, with a degree-7
        rule.
        """
        corners = np.asarray(corners, dtype=float)
        n = corners.shape[0]
        if m == 0 or self.is_zero(m) or n == 0:
            return super().cell_integrals(m, corners, quad)

        center = cookie_center(m)
        amplitude = COOKIE_AMPLITUDES[m]
        area = 0.5 * np.abs(
            (corners[:, 1, 0] - corners[:, 0, 0]) * (corners[:, 2, 1] - corners[:, 0, 1])
            - (corners[:, 2, 0] - corners[:, 0, 0]) * (corners[:, 1, 1] - corners[:, 0, 1])
        )
        vertex_dist = np.linalg.norm(corners - center, axis=2)
        inside = np.all(vertex_dist <= self.radius, axis=1)
        outside = point_triangle_distance(center, corners) >= self.radius
        cut = ~inside & ~outside

        out = np.zeros(n)
        out[inside] = amplitude * area[inside]
        if np.any(cut):
            points, weights = collapsed_gauss(COOKIE_QUADRATURE_DEGREE).map_to(corners[cut])
            out[cut] = np.sum(weights * self.evaluate(m, points), axis=1)
        return out


def cookie_coefficient(m: int) -> SpatialFunction:
    if m < 0:
        raise ConfigurationError(f"Parameter index must be non-negative, got {m}.")
    field = CookieCoefficient()
    return lambda x: field.evaluate(m, x)


# ---------------------------------------------------------------------------
# Generic affine coefficient (custom and deterministic problems)
# ---------------------------------------------------------------------------

Term = Union[SpatialFunction, float]


class AffineCoefficient(CoefficientField):
    """
    Finite expansion given term by term: ``terms[0]`` is ``a_0``,
    ``terms[m]`` is ``a_m``.  Constant terms may be plain numbers.
    """

    def __init__(self, terms: Sequence[Term], a0_min: float = 1.0,
                 a0_max: Optional[float] = None, tau: Optional[float] = None,
                 description: str = "affine") -> None:
        if not terms:
            raise ConfigurationError("An affine coefficient needs at least a_0.")
        self._terms: List[Term] = list(terms)
        self.max_active_m = len(self._terms) - 1
        self.a0_min = a0_min
        self.a0_max = a0_min if a0_max is None else a0_max
        self._tau = tau
        self.description = description

    def evaluate(self, m: int, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.is_zero(m):
            return np.zeros(x.shape[:-1])
        term = self._terms[m]
        if callable(term):
            return np.broadcast_to(np.asarray(term(x), dtype=float), x.shape[:-1])
        return np.full(x.shape[:-1], float(term))

    def tau_bound(self) -> Optional[float]:
        return self._tau


# ---------------------------------------------------------------------------
# Named problems
# ---------------------------------------------------------------------------

def _benchmark_square(grid: Optional[int]) -> ProblemSpec:
    return ProblemSpec("benchmark-square", DomainSpec(DOMAIN_SQUARE, grid or 16),
                       FourierModeCoefficient(), 1.0, default_tol=6e-4, default_m_bar=1)


def _benchmark_lshape(grid: Optional[int]) -> ProblemSpec:
    return ProblemSpec("benchmark-lshape", DomainSpec(DOMAIN_LSHAPE, grid or 8),
                       FourierModeCoefficient(), 1.0, default_tol=2.5e-3, default_m_bar=1)


def _cookie(grid: Optional[int]) -> ProblemSpec:
    return ProblemSpec("cookie", DomainSpec(DOMAIN_SQUARE, grid or 16),
                       CookieCoefficient(), 1.0, default_tol=8e-4, default_m_bar=9,
                       max_parameter=9)


_FACTORIES: Dict[str, Callable[[Optional[int]], ProblemSpec]] = {
    "benchmark-square": _benchmark_square,
    "benchmark-lshape": _benchmark_lshape,
    "cookie": _cookie,
}

PROBLEMS = list(_FACTORIES)


def get_problem(name: str, grid: Optional[int] = None) -> ProblemSpec:
    """Look up a problem by its command-line name; ``grid`` overrides ``n``."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ConfigurationError(f"Unknown problem '{name}'. Choose from {PROBLEMS}.") from None
    problem = factory(grid)
    bounds = validate_coefficient(problem.coefficient)
    if not bounds.admissible:
        raise ConfigurationError(f"Problem '{name}' has tau={bounds.tau:.4f} >= 1.")
    logger.debug("[ProblemLibrary] %s on %s (n=%d), tau=%.3f",
                 name, problem.domain.kind, problem.domain.n, bounds.tau)
    return problem
