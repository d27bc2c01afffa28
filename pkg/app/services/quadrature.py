"""
Triangle quadrature rules.

``symmetric_degree4`` is the default 6-point rule used per cell;
``collapsed_gauss`` builds Gauss–Jacobi × Gauss–Legendre product rules of
any degree through the collapsed (Duffy) map.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from app.models.quadrature import QuadratureRule

_A = 0.445948490915965
_B = 0.091576213509771
_WA = 0.223381589678011
_WB = 0.109951743655322


@lru_cache(maxsize=None)
def symmetric_degree4() -> QuadratureRule:
    points = np.array([
        [_A, _A], [1.0 - 2.0 * _A, _A], [_A, 1.0 - 2.0 * _A],
        [_B, _B], [1.0 - 2.0 * _B, _B], [_B, 1.0 - 2.0 * _B],
    ])
    weights = 0.5 * np.array([_WA, _WA, _WA, _WB, _WB, _WB])
    return QuadratureRule(points, weights / weights.sum() * 0.5, 4)


@lru_cache(maxsize=None)
def collapsed_gauss(degree: int) -> QuadratureRule:
    """Product rule exact for polynomials of total degree ``degree``."""
    n = max(1, (degree + 2) // 2)
    t, wt = roots_jacobi(n, 1.0, 0.0)     # weight (1 - t) absorbs the Duffy Jacobian
    s, ws = roots_legendre(n)
    v = 0.5 * (1.0 + t)
    u = 0.5 * (1.0 + s)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    points = np.column_stack([(uu * (1.0 - vv)).ravel(), vv.ravel()])
    weights = np.outer(0.5 * ws, 0.25 * wt).ravel()
    return QuadratureRule(points, weights, degree)


def default_rule() -> QuadratureRule:
    return symmetric_degree4()
