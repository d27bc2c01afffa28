'''
Tests for initial meshes, newest vertex bisection and nested interpolation.
'''
import numpy as np
import pytest

from app.exceptions import MeshError
from app.models.mesh import MarkedVertexSet
from app.models.problem import DOMAIN_LSHAPE, DOMAIN_SQUARE, DomainSpec
from app.services.mesh_service import (
    dump_mesh,
    initial_mesh,
    interpolate,
    is_conforming,
    load_mesh,
    marked_from_positions,
    mesh_from_triangulation,
    min_angle,
    n_plus_positions,
    new_interior_vertices,
    prolongation,
    realized_positions,
    refine,
    refinement_closure,
    uniform_refine,
)


def _sorted_rows(points):
    points = np.round(points, 12)
    return points[np.lexsort((points[:, 1], points[:, 0]))]


def _full(mesh, values):
    out = np.zeros(mesh.n_vertices)
    out[mesh.interior_vertex_ids] = values
    return out


##################
# Initial meshes #
##################

def test_unit_square_sixteen():
    mesh = initial_mesh(DomainSpec(DOMAIN_SQUARE, 16))
    assert mesh.n_elements == 512
    assert mesh.n_vertices == 289
    assert mesh.n_dofs == 225
    assert mesh.edges.shape[0] == 800
    assert np.count_nonzero(mesh.edge_counts == 1) == 64
    assert len(new_interior_vertices(mesh)) == 736
    assert np.isclose(mesh.areas.sum(), 1.0)
    assert mesh.is_initial
    assert np.all(mesh.levels == 0)


def test_lshape_eight():
    mesh = initial_mesh(DomainSpec(DOMAIN_LSHAPE, 8))
    assert mesh.n_elements == 384
    assert mesh.n_vertices == 225
    assert mesh.n_dofs == 161
    assert np.isclose(mesh.areas.sum(), 3.0)
    x, y = mesh.coordinates[:, 0], mesh.coordinates[:, 1]
    assert not np.any((x < 0) & (y < 0))
    # the re-entrant corner is a boundary vertex
    corner = np.flatnonzero(np.all(np.isclose(mesh.coordinates, 0.0), axis=1))
    assert corner.size == 1 and mesh.on_boundary[corner[0]]


def test_one_cell_square():
    mesh = initial_mesh(DomainSpec(DOMAIN_SQUARE, 1))
    assert mesh.n_elements == 2
    assert mesh.n_dofs == 0
    n_plus = new_interior_vertices(mesh)
    assert len(n_plus) == 1
    np.testing.assert_allclose(n_plus.midpoints(mesh), [[0.5, 0.5]])


@pytest.mark.parametrize("kind,n", [(DOMAIN_SQUARE, 1), (DOMAIN_SQUARE, 5), (DOMAIN_LSHAPE, 2)])
def test_refinement_edge_is_longest_and_orientation_positive(kind, n):
    mesh = initial_mesh(DomainSpec(kind, n))
    p = mesh.corners
    lengths = np.stack([
        np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
        np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
    ], axis=1)
    assert np.all(lengths[:, 0] >= lengths.max(axis=1) - 1e-14)
    assert np.all(mesh.signed_areas > 0)


def test_invalid_domains():
    with pytest.raises(MeshError):
        DomainSpec("circle", 4)
    with pytest.raises(MeshError):
        DomainSpec(DOMAIN_SQUARE, 0)


def test_degenerate_triangulation_rejected():
    coordinates = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(MeshError):
        mesh_from_triangulation(coordinates, np.array([[0, 1, 2]]))


##############
# Refinement #
##############

def test_refine_without_marks_returns_same_mesh(square4):
    assert refine(square4, MarkedVertexSet.empty()) is square4


def test_refine_centre_of_one_cell_square():
    mesh = initial_mesh(DomainSpec(DOMAIN_SQUARE, 1))
    fine = refine(mesh, new_interior_vertices(mesh))
    assert fine.n_elements == 4
    assert fine.n_vertices == 5
    assert fine.n_dofs == 1
    assert np.all(fine.levels == 1)
    np.testing.assert_allclose(fine.coordinates[4], [0.5, 0.5])
    assert is_conforming(fine)


def test_refine_rejects_vertices_outside_n_plus():
    mesh = initial_mesh(DomainSpec(DOMAIN_SQUARE, 1))
    # (0, 1) is the bottom boundary edge, (1, 2) is not an edge at all
    with pytest.raises(MeshError):
        refine(mesh, MarkedVertexSet(np.array([[0, 1]])))
    with pytest.raises(MeshError):
        refine(mesh, MarkedVertexSet(np.array([[1, 2]])))


def test_uniform_refine(square4):
    fine = uniform_refine(square4)
    assert fine.n_elements == 4 * square4.n_elements
    np.testing.assert_array_equal(fine.levels, square4.levels[fine.ancestors] + 2)
    nv = square4.n_vertices
    np.testing.assert_allclose(fine.coordinates[nv:], square4.coordinates[square4.edges].mean(axis=1))
    assert fine.root == square4.root and fine.uid != square4.uid
    assert is_conforming(fine)


def test_refining_all_of_n_plus_matches_uniform_interior(square4):
    marked = refine(square4, new_interior_vertices(square4))
    uniform = uniform_refine(square4)
    np.testing.assert_allclose(
        _sorted_rows(marked.coordinates[marked.interior_vertex_ids]),
        _sorted_rows(uniform.coordinates[uniform.interior_vertex_ids]),
    )


@pytest.mark.parametrize("kind,n", [(DOMAIN_SQUARE, 4), (DOMAIN_LSHAPE, 2)])
def test_random_refinement_invariants(kind, n, refine_randomly):
    coarse = initial_mesh(DomainSpec(kind, n))
    fine = refine_randomly(coarse, steps=4)
    assert is_conforming(fine)
    assert fine.root == coarse.root
    np.testing.assert_array_equal(fine.coordinates[: coarse.n_vertices], coarse.coordinates)
    np.testing.assert_allclose(fine.areas, coarse.areas[fine.ancestors] * 2.0 ** -fine.levels)
    assert np.isclose(fine.areas.sum(), coarse.areas.sum())
    # bisection of right isosceles triangles keeps them similar
    assert min_angle(fine) >= np.pi / 4 - 1e-9


def test_closure_matches_realized_vertices(square4, rng):
    n_plus = len(new_interior_vertices(square4))
    for _ in range(5):
        positions = np.sort(rng.choice(n_plus, size=3, replace=False))
        marked = marked_from_positions(square4, positions)
        closure = refinement_closure(square4, marked)
        realized = realized_positions(square4, refine(square4, marked))
        np.testing.assert_array_equal(np.sort(n_plus_positions(square4, closure)), np.sort(realized))
        assert set(positions) <= set(realized)


def test_closure_of_one_cell_square_is_the_mark():
    mesh = initial_mesh(DomainSpec(DOMAIN_SQUARE, 1))
    marked = new_interior_vertices(mesh)
    assert refinement_closure(mesh, marked) == marked


#################
# Prolongation  #
#################

def test_single_step_prolongation_averages_parents(square4, rng):
    positions = np.arange(0, len(new_interior_vertices(square4)), 5)
    fine = refine(square4, marked_from_positions(square4, positions))
    values = rng.standard_normal(square4.n_dofs)
    coarse_full = _full(square4, values)
    fine_full = _full(fine, interpolate(values, square4, fine))

    nv = square4.n_vertices
    np.testing.assert_allclose(fine_full[:nv], coarse_full)
    parents = fine.parents[nv:]
    np.testing.assert_allclose(fine_full[nv:], 0.5 * (coarse_full[parents[:, 0]] + coarse_full[parents[:, 1]]))


def test_prolongation_composes(square4, refine_randomly):
    middle = refine_randomly(square4, steps=2)
    fine = refine_randomly(middle, steps=2)
    direct = prolongation(square4, fine).toarray()
    chained = (prolongation(middle, fine) @ prolongation(square4, middle)).toarray()
    np.testing.assert_allclose(direct, chained, atol=1e-14)


def test_prolongation_identity_and_foreign_meshes(square4, square2):
    np.testing.assert_array_equal(prolongation(square4, square4).toarray(), np.eye(square4.n_dofs))
    with pytest.raises(MeshError):
        prolongation(square2, uniform_refine(square4))


################
# Text dumps   #
################

def test_dump_and_load(tmp_path, square4, refine_randomly):
    mesh = refine_randomly(square4, steps=2)
    loaded = load_mesh(dump_mesh(tmp_path / "meshes" / "mesh.txt", mesh))
    np.testing.assert_array_equal(loaded.coordinates, mesh.coordinates)
    np.testing.assert_array_equal(loaded.triangles, mesh.triangles)
    np.testing.assert_array_equal(loaded.on_boundary, mesh.on_boundary)
    np.testing.assert_array_equal(loaded.levels, mesh.levels)
    assert loaded.is_initial


def test_load_malformed_dump(tmp_path):
    path = tmp_path / "broken.txt"
    path.write_text("3 1\n0 0 1\n1 0\n", encoding="utf-8")
    with pytest.raises(MeshError):
        load_mesh(path)
