"""
Error indicators and marking results.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from app.models.mesh import MarkedVertexSet
from app.models.parametric import IndexSet, MultiIndex
from app.models.space import MultilevelSpace


@dataclass(frozen=True, eq=False)
class Indicators:
    """
    ``spatial[ν][k]`` is the two-level indicator of the k-th vertex of
    ``N+`` of ``mesh_of(ν)`` (in edge order); ``parametric[ν]`` is the
    hierarchical indicator of a detail index ``ν ∈ Q``.
    """

    space: MultilevelSpace
    detail_set: IndexSet
    spatial: Mapping[MultiIndex, np.ndarray]
    parametric: Mapping[MultiIndex, float]

    @property
    def index_set(self) -> IndexSet:
        return self.space.index_set

    @property
    def spatial_sum_sq(self) -> float:
        return float(sum(np.sum(v ** 2) for v in self.spatial.values()))

    @property
    def parametric_sum_sq(self) -> float:
        return float(sum(v ** 2 for v in self.parametric.values()))

    @property
    def est_x(self) -> float:
        return float(np.sqrt(self.spatial_sum_sq))

    @property
    def est_p(self) -> float:
        return float(np.sqrt(self.parametric_sum_sq))

    @property
    def est(self) -> float:
        return float(np.sqrt(self.spatial_sum_sq + self.parametric_sum_sq))

    @property
    def max_spatial(self) -> float:
        return float(max((v.max() for v in self.spatial.values() if v.size), default=0.0))

    @property
    def max_parametric(self) -> float:
        return float(max(self.parametric.values(), default=0.0))


@dataclass(frozen=True, eq=False)
class MarkResult:
    spatial_marks: Dict[MultiIndex, MarkedVertexSet] = field(default_factory=dict)
    parametric_marks: Tuple[MultiIndex, ...] = ()

    @property
    def n_spatial(self) -> int:
        return sum(len(v) for v in self.spatial_marks.values())

    @property
    def n_parametric(self) -> int:
        return len(self.parametric_marks)

    @property
    def is_empty(self) -> bool:
        return self.n_spatial == 0 and self.n_parametric == 0

    @property
    def branch(self) -> str:
        if self.n_spatial and self.n_parametric:
            return "both"
        if self.n_spatial:
            return "spatial"
        if self.n_parametric:
            return "parametric"
        return "none"
