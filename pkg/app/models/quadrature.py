"""Quadrature rules on the reference triangle ``{(ξ, η): ξ, η >= 0, ξ + η <= 1}``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray      # (k, 2) reference coordinates
    weights: np.ndarray     # (k,), summing to the reference area 1/2
    degree: int

    @property
    def n_points(self) -> int:
        return int(self.weights.shape[0])

    def shape_values(self) -> np.ndarray:
        """(k, 3) values of the reference hat functions at the points."""
        xi, eta = self.points[:, 0], self.points[:, 1]
        return np.column_stack([1.0 - xi - eta, xi, eta])

    def map_to(self, corners: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Physical points ``(n, k, 2)`` and weights ``(n, k)`` for ``n``
        triangles given by ``corners`` of shape ``(n, 3, 2)``.
        """
        corners = np.asarray(corners, dtype=float)
        lam = self.shape_values()
        points = np.einsum("kj,njd->nkd", lam, corners)
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return points, jac[:, None] * self.weights[None, :]
