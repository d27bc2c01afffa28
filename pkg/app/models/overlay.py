"""
Overlay Domain Model.

The coarsest common refinement of two NVB meshes of the same initial
mesh, stored as cells.  A ``first`` cell is an element of mesh A lying
inside an element of mesh B; a ``second`` cell is an element of mesh B
lying strictly inside an element of mesh A.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from app.models.mesh import Mesh

SIDE_FIRST = 0
SIDE_SECOND = 1


@dataclass(frozen=True)
class OverlayCell:
    side: str               # "first" | "second"
    element_id: int
    container_id: int


@dataclass(frozen=True, eq=False)
class Overlay:
    mesh_a: Mesh = field(repr=False)
    mesh_b: Mesh = field(repr=False)
    sides: np.ndarray           # (n,) int8, SIDE_FIRST / SIDE_SECOND
    a_elements: np.ndarray      # (n,) element of mesh A containing (or equal to) the cell
    b_elements: np.ndarray      # (n,) element of mesh B containing (or equal to) the cell

    def __len__(self) -> int:
        return int(self.sides.shape[0])

    @property
    def cells(self) -> List[OverlayCell]:
        out = []
        for side, a, b in zip(self.sides, self.a_elements, self.b_elements):
            if side == SIDE_FIRST:
                out.append(OverlayCell("first", int(a), int(b)))
            else:
                out.append(OverlayCell("second", int(b), int(a)))
        return out

    @property
    def corners(self) -> np.ndarray:
        """(n, 3, 2) geometry of each cell."""
        first = self.sides == SIDE_FIRST
        out = np.empty((len(self), 3, 2))
        out[first] = self.mesh_a.corners[self.a_elements[first]]
        out[~first] = self.mesh_b.corners[self.b_elements[~first]]
        return out

    @property
    def areas(self) -> np.ndarray:
        first = self.sides == SIDE_FIRST
        out = np.empty(len(self))
        out[first] = self.mesh_a.areas[self.a_elements[first]]
        out[~first] = self.mesh_b.areas[self.b_elements[~first]]
        return out

    @property
    def ancestors(self) -> np.ndarray:
        return self.mesh_a.ancestors[self.a_elements]
