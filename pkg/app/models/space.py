"""
Multilevel space ``V = ⊕_ν X_ν ⊗ span{P_ν}``: one mesh per active index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Tuple

import numpy as np

from app.exceptions import MeshError
from app.models.mesh import Mesh
from app.models.parametric import IndexSet, MultiIndex


@dataclass(frozen=True, eq=False)
class MultilevelSpace:
    index_set: IndexSet
    meshes: Mapping[MultiIndex, Mesh]
    initial_mesh: Mesh
    single_level: bool = False

    def __post_init__(self) -> None:
        missing = [nu for nu in self.index_set if nu not in self.meshes]
        if missing:
            raise MeshError(f"No mesh assigned to indices {[str(nu) for nu in missing]}.")
        roots = {self.meshes[nu].root for nu in self.index_set}
        if roots - {self.initial_mesh.uid}:
            raise MeshError("Every mesh of a multilevel space must refine the same initial mesh.")
        if self.single_level and len({self.meshes[nu].uid for nu in self.index_set}) > 1:
            raise MeshError("A single-level space shares one mesh across all indices.")
        object.__setattr__(self, "meshes", {nu: self.meshes[nu] for nu in self.index_set})

    @classmethod
    def initial(cls, mesh: Mesh, single_level: bool = False) -> "MultilevelSpace":
        return cls(IndexSet.initial(), {MultiIndex.zero(): mesh}, mesh, single_level)

    def mesh_of(self, nu: MultiIndex) -> Mesh:
        return self.meshes[nu]

    @property
    def detail_mesh(self) -> Mesh:
        """Mesh carrying the parametric detail spaces and newly activated indices."""
        if self.single_level:
            return self.meshes[MultiIndex.zero()]
        return self.initial_mesh

    @cached_property
    def dof_counts(self) -> Tuple[int, ...]:
        return tuple(self.meshes[nu].n_dofs for nu in self.index_set)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dof_counts)]).astype(np.int64)

    @property
    def n_dofs(self) -> int:
        return int(self.offsets[-1])

    def distinct_meshes(self) -> List[Mesh]:
        seen: Dict[int, Mesh] = {}
        for nu in self.index_set:
            mesh = self.meshes[nu]
            seen.setdefault(mesh.uid, mesh)
        return list(seen.values())

    def refined(
        self,
        meshes: Mapping[MultiIndex, Mesh],
        new_indices: Iterable[MultiIndex] = (),
    ) -> "MultilevelSpace":
        """Next space: replaced meshes for existing indices plus new indices."""
        new_indices = tuple(new_indices)
        updated = dict(self.meshes)
        updated.update(meshes)
        detail = updated[MultiIndex.zero()] if self.single_level else self.initial_mesh
        for nu in new_indices:
            updated.setdefault(nu, detail)
        return MultilevelSpace(
            self.index_set.union(new_indices), updated, self.initial_mesh, self.single_level
        )
