"""
Mesh Domain Model.

Array-backed triangulations produced by newest vertex bisection (NVB).
Element rows are ordered ``(v0, v1, v2)``: the refinement edge is
``(v0, v1)`` and ``v2`` is the newest vertex.  Meshes are immutable; every
refinement returns a new object with a fresh ``uid`` while keeping the
vertex ids of its parent mesh as a prefix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, List, Tuple

import numpy as np

_MESH_UIDS = itertools.count()


def next_mesh_uid() -> int:
    return next(_MESH_UIDS)


@dataclass(frozen=True)
class Vertex:
    """A mesh vertex (view onto the coordinate arrays)."""
    id: int
    x: float
    y: float
    on_boundary: bool


@dataclass(frozen=True)
class Element:
    """A triangle with its NVB level and initial-mesh ancestor."""
    vertex_ids: Tuple[int, int, int]
    level: int
    ancestor: int


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming NVB triangulation of a polygonal domain."""

    # ---------------------------------------------------------------------
    # Geometry / topology
    # ---------------------------------------------------------------------
    coordinates: np.ndarray             # (nv, 2) float
    triangles: np.ndarray               # (ne, 3) int, counter-clockwise
    on_boundary: np.ndarray             # (nv,) bool

    # ---------------------------------------------------------------------
    # Refinement history
    # ---------------------------------------------------------------------
    levels: np.ndarray                  # (ne,) int, 0 on T_0
    ancestors: np.ndarray               # (ne,) int, element id in T_0
    parents: np.ndarray                 # (nv, 2) int, bisected edge or -1
    root: int                           # uid of the initial mesh

    uid: int = field(default_factory=next_mesh_uid)

    # ------------------------------------------------------------------
    # Sizes
    # ------------------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return int(self.coordinates.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def n_dofs(self) -> int:
        return int(np.count_nonzero(~self.on_boundary))

    @property
    def is_initial(self) -> bool:
        return self.uid == self.root

    # ------------------------------------------------------------------
    # Per-item views
    # ------------------------------------------------------------------

    def vertex(self, vertex_id: int) -> Vertex:
        x, y = self.coordinates[vertex_id]
        return Vertex(int(vertex_id), float(x), float(y), bool(self.on_boundary[vertex_id]))

    def element(self, element_id: int) -> Element:
        v0, v1, v2 = (int(v) for v in self.triangles[element_id])
        return Element((v0, v1, v2), int(self.levels[element_id]), int(self.ancestors[element_id]))

    @property
    def vertices(self) -> List[Vertex]:
        return [self.vertex(i) for i in range(self.n_vertices)]

    @property
    def elements(self) -> List[Element]:
        return [self.element(i) for i in range(self.n_elements)]

    # ------------------------------------------------------------------
    # Derived arrays (computed once per mesh)
    # ------------------------------------------------------------------

    @cached_property
    def corners(self) -> np.ndarray:
        """(ne, 3, 2) vertex coordinates per element."""
        return self.coordinates[self.triangles]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.corners
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    @cached_property
    def _edge_data(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        local = self.triangles[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2)
        edges, inverse, counts = np.unique(
            np.sort(local, axis=1), axis=0, return_inverse=True, return_counts=True
        )
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """(n_edges, 2) sorted vertex pairs in lexicographic order."""
        return self._edge_data[0]

    @property
    def element_edges(self) -> np.ndarray:
        """(ne, 3) edge ids: column 0 is the refinement edge, then (v1,v2), (v2,v0)."""
        return self._edge_data[1]

    @property
    def edge_counts(self) -> np.ndarray:
        return self._edge_data[2]

    @cached_property
    def edge_keys(self) -> np.ndarray:
        """Scalar keys ``a * nv + b`` of the sorted edges (ascending)."""
        e = self.edges.astype(np.int64)
        return e[:, 0] * self.n_vertices + e[:, 1]

    @cached_property
    def interior_edge_ids(self) -> np.ndarray:
        return np.flatnonzero(self.edge_counts == 2)

    @cached_property
    def interior_dof_numbering(self) -> np.ndarray:
        """Vertex id -> dof index, ``-1`` for Dirichlet boundary vertices."""
        numbering = np.full(self.n_vertices, -1, dtype=np.int64)
        interior = ~self.on_boundary
        numbering[interior] = np.arange(np.count_nonzero(interior))
        return numbering

    @cached_property
    def interior_vertex_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.on_boundary)

    def __repr__(self) -> str:
        return (
            f"Mesh(uid={self.uid}, root={self.root}, nv={self.n_vertices}, "
            f"ne={self.n_elements}, dofs={self.n_dofs})"
        )


@dataclass(frozen=True, eq=False)
class MarkedVertexSet:
    """
    Vertices of N+ selected for refinement.

    Members are identified by the sorted vertex pair of the edge they
    bisect, never by coordinates.  ``pairs`` is kept unique and in
    lexicographic order, which coincides with the edge order of the mesh
    they refer to.
    """

    pairs: np.ndarray = field(default_factory=lambda: np.empty((0, 2), dtype=np.int64))

    def __post_init__(self) -> None:
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size:
            pairs = np.unique(np.sort(pairs, axis=1), axis=0)
        object.__setattr__(self, "pairs", pairs)

    @classmethod
    def empty(cls) -> "MarkedVertexSet":
        return cls()

    def __len__(self) -> int:
        return int(self.pairs.shape[0])

    def __bool__(self) -> bool:
        return len(self) > 0

    def __iter__(self) -> Iterator[Tuple[int, int]]:
        return (tuple(int(v) for v in p) for p in self.pairs)

    def __contains__(self, pair: object) -> bool:
        try:
            a, b = sorted(pair)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            return False
        return bool(np.any((self.pairs[:, 0] == a) & (self.pairs[:, 1] == b)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MarkedVertexSet):
            return NotImplemented
        return self.pairs.shape == other.pairs.shape and bool(np.all(self.pairs == other.pairs))

    def __hash__(self) -> int:
        return hash(self.pairs.tobytes())

    def union(self, other: "MarkedVertexSet") -> "MarkedVertexSet":
        return MarkedVertexSet(np.vstack([self.pairs, other.pairs]))

    def midpoints(self, mesh: Mesh) -> np.ndarray:
        """Coordinates the marked vertices will have once created."""
        return mesh.coordinates[self.pairs].mean(axis=1)
