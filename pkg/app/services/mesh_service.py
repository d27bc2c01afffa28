"""
Mesh Service – newest vertex bisection on triangles.

Pure functions on immutable :class:`~app.models.mesh.Mesh` objects:
initial grids, refinement with closure, uniform refinement, the ``N+``
vertex sets and nested P1 prolongation.

Refinement edges are closed by edge marking: every element with a
marked edge also marks its refinement edge, repeated until nothing
changes.  Each element is then split by one, two or three bisections.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse as sp

from app.exceptions import MeshError
from app.models.mesh import MarkedVertexSet, Mesh, next_mesh_uid
from app.models.problem import DOMAIN_LSHAPE, DOMAIN_SQUARE, DomainSpec

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Initial meshes
# ---------------------------------------------------------------------------

def initial_mesh(domain: DomainSpec) -> Mesh:
    """
    Uniform right-triangle grid with all diagonals from lower-left to
    upper-right.  ``square`` uses ``n × n`` cells on ``(0, 1)^2``;
    ``lshape`` uses cells of width ``1/n`` on ``(-1, 1)^2`` minus the
    lower-left quadrant.
    """
    if domain.kind == DOMAIN_SQUARE:
        cells_per_side, lower = domain.n, 0.0
        h = 1.0 / domain.n
    elif domain.kind == DOMAIN_LSHAPE:
        cells_per_side, lower = 2 * domain.n, -1.0
        h = 1.0 / domain.n
    else:  # pragma: no cover - DomainSpec validates the kind
        raise MeshError(f"Unsupported domain '{domain.kind}'.")

    stride = cells_per_side + 1
    ii, jj = np.meshgrid(np.arange(cells_per_side), np.arange(cells_per_side), indexing="xy")
    ii, jj = ii.ravel(), jj.ravel()
    if domain.kind == DOMAIN_LSHAPE:
        keep = ~((ii < domain.n) & (jj < domain.n))
        ii, jj = ii[keep], jj[keep]

    p00 = jj * stride + ii
    p10 = p00 + 1
    p01 = p00 + stride
    p11 = p01 + 1
    raw = np.concatenate([
        np.column_stack([p11, p00, p10]),
        np.column_stack([p00, p11, p01]),
    ])
    # cell-major order: both triangles of a cell are neighbours in the list
    order = np.argsort(np.concatenate([np.arange(ii.size), np.arange(ii.size)]), kind="stable")
    raw = raw[order]

    gx, gy = np.meshgrid(np.arange(stride), np.arange(stride), indexing="xy")
    grid = np.column_stack([lower + h * gx.ravel(), lower + h * gy.ravel()])
    used, triangles = np.unique(raw, return_inverse=True)
    coordinates = grid[used]
    triangles = _orient(coordinates, triangles.reshape(-1, 3))

    mesh = _from_arrays(coordinates, triangles)
    logger.debug(
        "[MeshService] Initial %s mesh: %d elements, %d vertices, %d dofs",
        domain.kind, mesh.n_elements, mesh.n_vertices, mesh.n_dofs,
    )
    return mesh


def mesh_from_triangulation(coordinates: np.ndarray, triangles: np.ndarray) -> Mesh:
    """Initial mesh from arbitrary arrays; refinement edges are assigned here."""
    coordinates = np.asarray(coordinates, dtype=float)
    triangles = _orient(coordinates, np.asarray(triangles, dtype=np.int64))
    return _from_arrays(coordinates, triangles)


def _orient(coordinates: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """
    Newest vertex opposite the longest edge (ties: lowest opposite vertex
    id), then ``(v0, v1)`` ordered for positive orientation.
    """
    p = coordinates[triangles]
    # length of the edge opposite local vertex k
    opposite = np.stack([
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
    ], axis=1)
    longest = opposite.max(axis=1, keepdims=True)
    candidates = np.isclose(opposite, longest, rtol=1e-12, atol=0.0)
    ids = np.where(candidates, triangles, np.iinfo(np.int64).max)
    newest = np.argmin(ids, axis=1)

    rows = np.arange(triangles.shape[0])
    v2 = triangles[rows, newest]
    v0 = triangles[rows, (newest + 1) % 3]
    v1 = triangles[rows, (newest + 2) % 3]
    out = np.column_stack([v0, v1, v2])

    q = coordinates[out]
    e1, e2 = q[:, 1] - q[:, 0], q[:, 2] - q[:, 0]
    area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    if np.any(np.abs(area) <= 1e-14 * np.max(np.abs(area), initial=1.0)):
        raise MeshError("Initial triangulation contains degenerate elements.")
    flip = area < 0
    out[flip, 0], out[flip, 1] = out[flip, 1].copy(), out[flip, 0].copy()
    return out


def _from_arrays(coordinates: np.ndarray, triangles: np.ndarray) -> Mesh:
    uid = next_mesh_uid()
    draft = Mesh(
        coordinates=coordinates,
        triangles=triangles,
        on_boundary=np.zeros(coordinates.shape[0], dtype=bool),
        levels=np.zeros(triangles.shape[0], dtype=np.int64),
        ancestors=np.arange(triangles.shape[0], dtype=np.int64),
        parents=np.full((coordinates.shape[0], 2), -1, dtype=np.int64),
        root=uid,
        uid=uid,
    )
    on_boundary = np.zeros(coordinates.shape[0], dtype=bool)
    on_boundary[draft.edges[draft.edge_counts == 1].ravel()] = True
    return Mesh(
        coordinates=coordinates,
        triangles=triangles,
        on_boundary=on_boundary,
        levels=draft.levels,
        ancestors=draft.ancestors,
        parents=draft.parents,
        root=uid,
        uid=uid,
    )


# ---------------------------------------------------------------------------
# N+ and marked vertex bookkeeping
# ---------------------------------------------------------------------------

def new_interior_vertices(mesh: Mesh) -> MarkedVertexSet:
    """``N+``: midpoints of the interior edges, in edge order."""
    return MarkedVertexSet(mesh.edges[mesh.interior_edge_ids])


def edge_ids(mesh: Mesh, marked: MarkedVertexSet) -> np.ndarray:
    """Edge ids of ``mesh`` bisected by the marked vertices."""
    if not len(marked):
        return np.zeros(0, dtype=np.int64)
    query = marked.pairs[:, 0] * mesh.n_vertices + marked.pairs[:, 1]
    pos = np.searchsorted(mesh.edge_keys, query)
    pos_clipped = np.minimum(pos, mesh.edge_keys.size - 1)
    found = (pos < mesh.edge_keys.size) & (mesh.edge_keys[pos_clipped] == query)
    if not np.all(found):
        bad = tuple(int(v) for v in marked.pairs[np.flatnonzero(~found)[0]])
        raise MeshError(f"Marked vertex on {bad} is not the midpoint of a mesh edge.")
    return pos


def n_plus_positions(mesh: Mesh, marked: MarkedVertexSet) -> np.ndarray:
    """Positions of the marked vertices inside ``new_interior_vertices(mesh)``."""
    ids = edge_ids(mesh, marked)
    if ids.size and not mesh.interior_edge_ids.size:
        raise MeshError("Mesh has no interior edges; N+ is empty.")
    pos = np.searchsorted(mesh.interior_edge_ids, ids)
    pos_clipped = np.minimum(pos, max(mesh.interior_edge_ids.size - 1, 0))
    inside = (pos < mesh.interior_edge_ids.size) & (mesh.interior_edge_ids[pos_clipped] == ids)
    if not np.all(inside):
        raise MeshError("Marked vertices must be interior edge midpoints (members of N+).")
    return pos


def marked_from_positions(mesh: Mesh, positions: np.ndarray) -> MarkedVertexSet:
    return MarkedVertexSet(mesh.edges[mesh.interior_edge_ids[np.asarray(positions, dtype=np.int64)]])


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

def _closure(mesh: Mesh, flags: np.ndarray) -> np.ndarray:
    flags = flags.copy()
    ee = mesh.element_edges
    ref = ee[:, 0]
    while True:
        need = flags[ee].any(axis=1) & ~flags[ref]
        if not need.any():
            return flags
        flags[ref[need]] = True


def _interior_flags(mesh: Mesh, marked: MarkedVertexSet) -> np.ndarray:
    n_plus_positions(mesh, marked)
    flags = np.zeros(mesh.edges.shape[0], dtype=bool)
    flags[edge_ids(mesh, marked)] = True
    return flags


def refine(mesh: Mesh, marked: MarkedVertexSet) -> Mesh:
    """Coarsest conforming NVB refinement whose vertices include ``marked``."""
    if not len(marked):
        return mesh
    flags = _closure(mesh, _interior_flags(mesh, marked))
    return _bisect_marked_edges(mesh, flags)


def refinement_closure(mesh: Mesh, marked: MarkedVertexSet) -> MarkedVertexSet:
    """Interior vertices ``refine(mesh, marked)`` creates (``N+ ∩ N_new``)."""
    if not len(marked):
        return MarkedVertexSet.empty()
    flags = _closure(mesh, _interior_flags(mesh, marked))
    flags &= mesh.edge_counts == 2
    return MarkedVertexSet(mesh.edges[flags])


def uniform_refine(mesh: Mesh) -> Mesh:
    """
    Bisect every edge once: four children per element, two levels down.
    The midpoint of edge ``e`` becomes vertex ``n_vertices + e``.
    """
    return _bisect_marked_edges(mesh, np.ones(mesh.edges.shape[0], dtype=bool))


def _bisect_marked_edges(mesh: Mesh, flags: np.ndarray) -> Mesh:
    edges = mesh.edges
    marked_ids = np.flatnonzero(flags)
    nv = mesh.n_vertices
    midpoint = np.full(edges.shape[0], -1, dtype=np.int64)
    midpoint[marked_ids] = nv + np.arange(marked_ids.size)

    new_parents = edges[marked_ids]
    coordinates = np.vstack([mesh.coordinates, mesh.coordinates[new_parents].mean(axis=1)])
    on_boundary = np.concatenate([mesh.on_boundary, mesh.edge_counts[marked_ids] == 1])
    parents = np.vstack([mesh.parents, new_parents])

    tri, lev, anc = mesh.triangles, mesh.levels, mesh.ancestors
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    ee = mesh.element_edges
    m0, m1, m2 = midpoint[ee[:, 0]], midpoint[ee[:, 1]], midpoint[ee[:, 2]]
    if np.any((m0 < 0) & ((m1 >= 0) | (m2 >= 0))):
        raise MeshError("Edge marks are not closed under the refinement-edge rule.")

    split = m0 >= 0
    pieces = []  # (element, order, triangles, level offset)

    def add(mask: np.ndarray, order: int, a: np.ndarray, b: np.ndarray, c: np.ndarray, offset: int) -> None:
        idx = np.flatnonzero(mask)
        if idx.size:
            pieces.append((idx, np.full(idx.size, order), np.column_stack([a[idx], b[idx], c[idx]]), offset))

    add(~split, 0, v0, v1, v2, 0)
    # child (v2, v0, m0), bisected again on (v2, v0) when that edge is marked
    add(split & (m2 < 0), 0, v2, v0, m0, 1)
    add(split & (m2 >= 0), 0, m0, v2, m2, 2)
    add(split & (m2 >= 0), 1, v0, m0, m2, 2)
    # child (v1, v2, m0), bisected again on (v1, v2) when that edge is marked
    add(split & (m1 < 0), 2, v1, v2, m0, 1)
    add(split & (m1 >= 0), 2, m0, v1, m1, 2)
    add(split & (m1 >= 0), 3, v2, m0, m1, 2)

    parent = np.concatenate([p[0] for p in pieces])
    order = np.concatenate([p[1] for p in pieces])
    triangles = np.vstack([p[2] for p in pieces])
    levels = np.concatenate([lev[p[0]] + p[3] for p in pieces])
    sort = np.lexsort((order, parent))

    refined = Mesh(
        coordinates=coordinates,
        triangles=triangles[sort],
        on_boundary=on_boundary,
        levels=levels[sort],
        ancestors=anc[parent[sort]],
        parents=parents,
        root=mesh.root,
    )
    logger.debug(
        "[MeshService] Bisected %d edges: %d -> %d elements",
        marked_ids.size, mesh.n_elements, refined.n_elements,
    )
    return refined


# ---------------------------------------------------------------------------
# Nested interpolation
# ---------------------------------------------------------------------------

def _check_descendant(coarse: Mesh, fine: Mesh) -> None:
    if coarse.root != fine.root or fine.n_vertices < coarse.n_vertices:
        raise MeshError(f"{fine!r} is not a refinement of {coarse!r}.")
    if not np.array_equal(fine.coordinates[: coarse.n_vertices], coarse.coordinates):
        raise MeshError(f"{fine!r} does not extend the vertex numbering of {coarse!r}.")


def _full_prolongation(coarse: Mesh, fine: Mesh) -> sp.csr_matrix:
    _check_descendant(coarse, fine)
    nc, nf = coarse.n_vertices, fine.n_vertices
    matrix = sp.identity(nc, format="csr")
    start = nc
    top = fine.parents.max(axis=1)
    while start < nf:
        later = np.flatnonzero(top[start:] >= start)
        stop = start + int(later[0]) if later.size else nf
        a, b = fine.parents[start:stop, 0], fine.parents[start:stop, 1]
        matrix = sp.vstack([matrix, 0.5 * (matrix[a] + matrix[b])], format="csr")
        start = stop
    return matrix


def prolongation(coarse: Mesh, fine: Mesh) -> sp.csr_matrix:
    """
    Interior-dof matrix embedding P1 functions on ``coarse`` into the
    nested mesh ``fine``.
    """
    if coarse.uid == fine.uid:
        return sp.identity(coarse.n_dofs, format="csr")
    full = _full_prolongation(coarse, fine)
    return full[fine.interior_vertex_ids][:, coarse.interior_vertex_ids].tocsr()


def interpolate(values: np.ndarray, coarse: Mesh, fine: Mesh) -> np.ndarray:
    return prolongation(coarse, fine) @ np.asarray(values, dtype=float)


def realized_positions(coarse: Mesh, fine: Mesh) -> np.ndarray:
    """
    Positions (within ``N+`` of ``coarse``) of the vertices a single
    ``refine`` step from ``coarse`` to ``fine`` created in the interior.
    """
    if coarse.uid == fine.uid:
        return np.zeros(0, dtype=np.int64)
    _check_descendant(coarse, fine)
    new = np.arange(coarse.n_vertices, fine.n_vertices)
    new = new[~fine.on_boundary[new]]
    pairs = fine.parents[new]
    if np.any(pairs >= coarse.n_vertices):
        raise MeshError("Realized vertices are defined for a single refinement step only.")
    return n_plus_positions(coarse, MarkedVertexSet(pairs))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

def min_angle(mesh: Mesh) -> float:
    """Smallest interior angle over all elements, in radians."""
    p = mesh.corners
    angles = []
    for k in range(3):
        a = p[:, (k + 1) % 3] - p[:, k]
        b = p[:, (k + 2) % 3] - p[:, k]
        cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.arccos(np.clip(cos, -1.0, 1.0)))
    return float(np.min(angles))


def is_conforming(mesh: Mesh) -> bool:
    """No edge shared by more than two elements and no hanging vertex."""
    if np.any(mesh.edge_counts > 2):
        return False
    created = mesh.parents[:, 0] >= 0
    if not np.any(created):
        return True
    pairs = np.sort(mesh.parents[created], axis=1).astype(np.int64)
    keys = pairs[:, 0] * mesh.n_vertices + pairs[:, 1]
    # a bisected edge still present in the mesh means its midpoint hangs
    return not np.any(np.isin(keys, mesh.edge_keys))


# ---------------------------------------------------------------------------
# Plain-text dump
# ---------------------------------------------------------------------------

def dump_mesh(path: Union[str, Path], mesh: Mesh) -> Path:
    """Write ``nv ne``, then ``x y boundary`` rows, then ``v0 v1 v2 level ancestor`` rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        handle.write(f"{mesh.n_vertices} {mesh.n_elements}\n")
        for (x, y), flag in zip(mesh.coordinates, mesh.on_boundary):
            handle.write(f"{x:.17g} {y:.17g} {int(flag)}\n")
        for (a, b, c), level, ancestor in zip(mesh.triangles, mesh.levels, mesh.ancestors):
            handle.write(f"{a} {b} {c} {level} {ancestor}\n")
    return path


def load_mesh(path: Union[str, Path]) -> Mesh:
    """
    Read a dump back.  Bisection history is not stored, so the result is
    a new root mesh carrying the dumped levels and ancestors.
    """
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    try:
        nv, ne = (int(tok) for tok in lines[0].split())
        vertex_rows = np.array([line.split() for line in lines[1:1 + nv]], dtype=float).reshape(nv, 3)
        element_rows = np.array(
            [line.split() for line in lines[1 + nv:1 + nv + ne]], dtype=np.int64
        ).reshape(ne, 5)
    except ValueError as exc:
        raise MeshError(f"Malformed mesh dump {path}: {exc}") from exc
    uid = next_mesh_uid()
    return Mesh(
        coordinates=vertex_rows[:, :2].copy(),
        triangles=element_rows[:, :3].copy(),
        on_boundary=vertex_rows[:, 2].astype(bool),
        levels=element_rows[:, 3].copy(),
        ancestors=element_rows[:, 4].copy(),
        parents=np.full((nv, 2), -1, dtype=np.int64),
        root=uid,
        uid=uid,
    )
