'''
Tests for the coarsest common refinement of two meshes.
'''
import numpy as np
import pytest

from app.exceptions import OverlayError
from app.models.overlay import SIDE_FIRST
from app.models.problem import DOMAIN_LSHAPE, DOMAIN_SQUARE, DomainSpec
from app.services.mesh_service import initial_mesh, uniform_refine
from app.services.overlay_service import (
    INTERIOR_TOL,
    ancestor_buckets,
    barycentric,
    barycentric_many,
    build_overlay,
)


def test_barycentric_coordinates(square2):
    corners = square2.corners[0]
    np.testing.assert_allclose(barycentric(corners.mean(axis=0), square2, 0), [1 / 3, 1 / 3, 1 / 3])
    np.testing.assert_allclose(barycentric(corners[1], square2, 0), [0.0, 1.0, 0.0], atol=1e-14)
    outside = corners[0] + 2.0 * (corners[0] - corners.mean(axis=0))
    assert barycentric(outside, square2, 0).min() < 0


def test_barycentric_many_broadcasts(square2):
    lam = barycentric_many(square2.centroids[:, None, :], square2.corners[None, :, :, :])
    assert lam.shape == (square2.n_elements, square2.n_elements, 3)
    np.testing.assert_allclose(lam.sum(axis=-1), 1.0)
    inside = np.all(lam > INTERIOR_TOL, axis=-1)
    np.testing.assert_array_equal(inside, np.eye(square2.n_elements, dtype=bool))


def test_ancestor_buckets_partition(square4, refine_randomly):
    mesh = refine_randomly(square4)
    buckets = ancestor_buckets(mesh)
    assert len(buckets) == square4.n_elements
    np.testing.assert_array_equal(np.sort(np.concatenate(buckets)), np.arange(mesh.n_elements))
    for root, bucket in enumerate(buckets):
        assert np.all(mesh.ancestors[bucket] == root)


def test_overlay_of_a_mesh_with_itself(square4):
    overlay = build_overlay(square4, square4)
    assert len(overlay) == square4.n_elements
    assert all(cell.side == "first" and cell.element_id == cell.container_id for cell in overlay.cells)


def test_overlay_of_uniform_refinement(square4):
    fine = uniform_refine(square4)
    overlay = build_overlay(fine, square4)
    assert len(overlay) == fine.n_elements
    assert np.all(overlay.sides == SIDE_FIRST)
    np.testing.assert_array_equal(overlay.b_elements, fine.ancestors[overlay.a_elements])

    flipped = build_overlay(square4, fine)
    assert len(flipped) == fine.n_elements
    assert all(cell.side == "second" for cell in flipped.cells)


@pytest.mark.parametrize("kind,n", [(DOMAIN_SQUARE, 4), (DOMAIN_LSHAPE, 2)])
def test_overlay_of_independent_refinements(kind, n, refine_randomly):
    coarse = initial_mesh(DomainSpec(kind, n))
    mesh_a = refine_randomly(coarse, steps=3)
    mesh_b = refine_randomly(coarse, steps=3)
    overlay = build_overlay(mesh_a, mesh_b)

    assert np.isclose(overlay.areas.sum(), coarse.areas.sum(), rtol=1e-12)
    assert len(overlay) >= max(mesh_a.n_elements, mesh_b.n_elements)

    # every cell lies inside both containing elements
    for mesh, containers in ((mesh_a, overlay.a_elements), (mesh_b, overlay.b_elements)):
        lam = barycentric_many(overlay.corners, mesh.corners[containers][:, None, :, :])
        assert lam.min() >= -1e-12

    # the overlay is symmetric up to the side labels
    reverse = build_overlay(mesh_b, mesh_a)
    np.testing.assert_allclose(np.sort(overlay.areas), np.sort(reverse.areas))
    assert len(reverse) == len(overlay)


def test_overlay_needs_a_common_initial_mesh(square4):
    other = initial_mesh(DomainSpec(DOMAIN_SQUARE, 4))
    with pytest.raises(OverlayError):
        build_overlay(square4, other)


###########################
# Clipping cross-check    #
###########################

def _ccw(tri):
    (x0, y0), (x1, y1), (x2, y2) = tri
    return tri if (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0) > 0 else tri[::-1]


def _polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_area(subject, clip):
    """Area of ``subject ∩ clip`` for two triangles, clipping edge by edge."""
    poly = list(_ccw(np.asarray(subject, dtype=float)))
    clip = _ccw(np.asarray(clip, dtype=float))
    for k in range(3):
        p, q = clip[k], clip[(k + 1) % 3]
        normal = np.array([p[1] - q[1], q[0] - p[0]])
        side = [float(np.dot(normal, v - p)) for v in poly]
        kept = []
        for i, v in enumerate(poly):
            w, s_v, s_w = poly[(i + 1) % len(poly)], side[i], side[(i + 1) % len(poly)]
            if s_v >= 0:
                kept.append(v)
            if (s_v >= 0) != (s_w >= 0):
                kept.append(v + (w - v) * (s_v / (s_v - s_w)))
        poly = kept
        if not poly:
            return 0.0
    return _polygon_area(np.array(poly))


def test_clip_area_helper():
    unit = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert clip_area(unit, unit) == pytest.approx(0.5)
    assert clip_area(unit, unit + [2.0, 0.0]) == 0.0
    assert clip_area(unit, unit * 0.5) == pytest.approx(0.125)
    assert clip_area(unit, unit[::-1] + [0.5, 0.0]) == pytest.approx(0.125)


@pytest.mark.parametrize("kind,n,pairs", [(DOMAIN_SQUARE, 2, 70), (DOMAIN_LSHAPE, 2, 70), (DOMAIN_SQUARE, 3, 60)])
def test_overlay_cells_match_clipped_intersections(kind, n, pairs, refine_randomly):
    coarse = initial_mesh(DomainSpec(kind, n))
    for _ in range(pairs):
        mesh_a = refine_randomly(coarse, steps=2, fraction=0.4)
        mesh_b = refine_randomly(coarse, steps=2, fraction=0.4)
        overlay = build_overlay(mesh_a, mesh_b)

        expected = {}
        for root, (bucket_a, bucket_b) in enumerate(zip(ancestor_buckets(mesh_a), ancestor_buckets(mesh_b))):
            for a in bucket_a:
                for b in bucket_b:
                    shared = clip_area(mesh_a.corners[a], mesh_b.corners[b])
                    if shared <= 1e-12 * coarse.areas[root]:
                        continue
                    # two NVB elements either nest or have disjoint interiors
                    assert shared == pytest.approx(min(mesh_a.areas[a], mesh_b.areas[b]), rel=1e-9)
                    expected[int(a), int(b)] = shared

        found = dict(zip(zip(overlay.a_elements.tolist(), overlay.b_elements.tolist()), overlay.areas))
        assert found.keys() == expected.keys()
        for pair, area in found.items():
            assert area == pytest.approx(expected[pair], rel=1e-9)
        assert overlay.areas.sum() == pytest.approx(coarse.areas.sum(), rel=1e-12)
        for mesh, containers in ((mesh_a, overlay.a_elements), (mesh_b, overlay.b_elements)):
            lam = barycentric_many(overlay.corners, mesh.corners[containers][:, None, :, :])
            assert lam.min() >= -1e-12
