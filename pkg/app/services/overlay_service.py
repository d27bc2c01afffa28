"""
Overlay Service – intersection of two NVB meshes.

Cells are found per initial element.  For elements ``T_a``, ``T_b`` of
the same bucket with ``level(T_a) >= level(T_b)``, ``T_a ⊆ T_b`` holds
exactly when the centroid of ``T_a`` lies strictly inside ``T_b``.
"""

from __future__ import annotations

import logging
from typing import List, Tuple

import numpy as np

from app.exceptions import MeshError, OverlayError
from app.models.mesh import Mesh
from app.models.overlay import SIDE_FIRST, SIDE_SECOND, Overlay

logger = logging.getLogger(__name__)

#: strict-interior threshold on barycentric coordinates
INTERIOR_TOL = 1e-12
#: upper bound on ``n_a * n_b`` barycentric evaluations held in memory at once
_CHUNK = 1 << 21


def barycentric(point: np.ndarray, mesh: Mesh, element_id: int) -> np.ndarray:
    """Barycentric coordinates of ``point`` with respect to one element."""
    corners = mesh.corners[element_id]
    return barycentric_many(np.asarray(point, dtype=float)[None, :], corners[None, :, :])[0]


def barycentric_many(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """
    Broadcasting barycentric coordinates: ``points`` ``(..., 2)`` against
    ``corners`` ``(..., 3, 2)``; returns ``(..., 3)``.
    """
    p0, p1, p2 = corners[..., 0, :], corners[..., 1, :], corners[..., 2, :]
    det = (p1[..., 0] - p0[..., 0]) * (p2[..., 1] - p0[..., 1]) - (p1[..., 1] - p0[..., 1]) * (
        p2[..., 0] - p0[..., 0]
    )
    if np.any(det == 0.0):
        raise MeshError("Barycentric coordinates requested for a degenerate element.")
    dx = points[..., 0] - p0[..., 0]
    dy = points[..., 1] - p0[..., 1]
    l1 = (dx * (p2[..., 1] - p0[..., 1]) - dy * (p2[..., 0] - p0[..., 0])) / det
    l2 = ((p1[..., 0] - p0[..., 0]) * dy - (p1[..., 1] - p0[..., 1]) * dx) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def ancestor_buckets(mesh: Mesh) -> List[np.ndarray]:
    """Element ids grouped by initial ancestor (index = ancestor id)."""
    order = np.argsort(mesh.ancestors, kind="stable")
    n_roots = int(mesh.ancestors.max()) + 1 if mesh.n_elements else 0
    bounds = np.searchsorted(mesh.ancestors[order], np.arange(n_roots + 1))
    return [order[bounds[k]:bounds[k + 1]] for k in range(n_roots)]


def build_overlay(mesh_a: Mesh, mesh_b: Mesh) -> Overlay:
    """Cells of the coarsest common refinement of ``mesh_a`` and ``mesh_b``."""
    if mesh_a.root != mesh_b.root:
        raise OverlayError(
            f"Meshes {mesh_a!r} and {mesh_b!r} do not refine the same initial mesh."
        )
    if mesh_a.uid == mesh_b.uid:
        ids = np.arange(mesh_a.n_elements)
        return _sorted(mesh_a, mesh_b, np.full(ids.size, SIDE_FIRST, dtype=np.int8), ids, ids.copy())

    buckets_a = ancestor_buckets(mesh_a)
    buckets_b = ancestor_buckets(mesh_b)
    if len(buckets_a) != len(buckets_b):
        raise OverlayError("Meshes disagree on the number of initial elements.")

    sides, a_cells, b_cells = [], [], []
    general = []
    for root, (bucket_a, bucket_b) in enumerate(zip(buckets_a, buckets_b)):
        if bucket_b.size == 1:
            # B unrefined here: every A element lies in it
            sides.append(np.full(bucket_a.size, SIDE_FIRST, dtype=np.int8))
            a_cells.append(bucket_a)
            b_cells.append(np.full(bucket_a.size, bucket_b[0]))
        elif bucket_a.size == 1:
            sides.append(np.full(bucket_b.size, SIDE_SECOND, dtype=np.int8))
            a_cells.append(np.full(bucket_b.size, bucket_a[0]))
            b_cells.append(bucket_b)
        else:
            general.append(root)

    for root in general:
        s, a, b = _overlay_bucket(mesh_a, mesh_b, buckets_a[root], buckets_b[root])
        sides.append(s)
        a_cells.append(a)
        b_cells.append(b)

    overlay = _sorted(
        mesh_a,
        mesh_b,
        np.concatenate(sides).astype(np.int8),
        np.concatenate(a_cells).astype(np.int64),
        np.concatenate(b_cells).astype(np.int64),
    )
    logger.debug(
        "[OverlayService] %r x %r: %d cells (%d general buckets)",
        mesh_a, mesh_b, len(overlay), len(general),
    )
    return overlay


def _strictly_inside(points: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """``inside[i, j]``: point ``i`` strictly inside triangle ``j`` (chunked)."""
    n_points, n_tri = points.shape[0], corners.shape[0]
    inside = np.zeros((n_points, n_tri), dtype=bool)
    step = max(1, _CHUNK // max(n_tri, 1))
    for start in range(0, n_points, step):
        chunk = points[start:start + step]
        lam = barycentric_many(chunk[:, None, :], corners[None, :, :, :])
        inside[start:start + step] = np.all(lam > INTERIOR_TOL, axis=-1)
    return inside


def _overlay_bucket(
    mesh_a: Mesh, mesh_b: Mesh, bucket_a: np.ndarray, bucket_b: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    level_a = mesh_a.levels[bucket_a]
    level_b = mesh_b.levels[bucket_b]

    # A elements contained in a B element of lower or equal level
    inside = _strictly_inside(mesh_a.centroids[bucket_a], mesh_b.corners[bucket_b])
    inside &= level_b[None, :] <= level_a[:, None]
    hits = inside.sum(axis=1)
    if np.any(hits > 1):
        bad = int(bucket_a[np.flatnonzero(hits > 1)[0]])
        raise OverlayError(f"Element {bad} of mesh A lies in several elements of mesh B.")
    contained = hits == 1
    first_a = bucket_a[contained]
    first_b = bucket_b[np.argmax(inside[contained], axis=1)] if first_a.size else first_a

    # remaining A elements are strictly refined in B
    coarse_a = bucket_a[~contained]
    second_a = second_b = np.zeros(0, dtype=np.int64)
    if coarse_a.size:
        inside_b = _strictly_inside(mesh_b.centroids[bucket_b], mesh_a.corners[coarse_a])
        inside_b &= level_b[:, None] > mesh_a.levels[coarse_a][None, :]
        hits_b = inside_b.sum(axis=1)
        if np.any(hits_b > 1):
            bad = int(bucket_b[np.flatnonzero(hits_b > 1)[0]])
            raise OverlayError(f"Element {bad} of mesh B lies in several elements of mesh A.")
        owned = hits_b == 1
        second_b = bucket_b[owned]
        second_a = coarse_a[np.argmax(inside_b[owned], axis=1)]

    area = mesh_a.areas[bucket_a].sum()
    covered = mesh_a.areas[first_a].sum() + mesh_b.areas[second_b].sum()
    if abs(covered - area) > 1e-10 * area:
        raise OverlayError(
            f"Overlay cells cover {covered!r} of an initial element of area {area!r}; "
            "containment tests are inconsistent."
        )

    sides = np.concatenate([
        np.full(first_a.size, SIDE_FIRST, dtype=np.int8),
        np.full(second_b.size, SIDE_SECOND, dtype=np.int8),
    ])
    return sides, np.concatenate([first_a, second_a]), np.concatenate([first_b, second_b])


def _sorted(mesh_a: Mesh, mesh_b: Mesh, sides: np.ndarray, a: np.ndarray, b: np.ndarray) -> Overlay:
    element = np.where(sides == SIDE_FIRST, a, b)
    order = np.lexsort((element, sides, mesh_a.ancestors[a]))
    return Overlay(mesh_a, mesh_b, sides[order], a[order], b[order])
