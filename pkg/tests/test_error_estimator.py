'''
Tests for the two-level spatial and hierarchical parametric indicators.
'''
import numpy as np
import pytest

from app.exceptions import EstimatorError
from app.models.indicators import MarkResult
from app.models.run import MarkingConfig
from app.models.parametric import IndexSet, MultiIndex
from app.models.space import MultilevelSpace
from app.services.adaptive_service import refine_space
from app.services.assembly_service import AssemblyService
from app.services.block_system import BlockSystemService, energy
from app.services.error_estimator import ErrorEstimator, reduction_check
from app.services.marking_service import mark
from app.services.mesh_service import marked_from_positions, new_interior_vertices
from app.services.parametric_basis import detail_set
from app.services.problem_library import AffineCoefficient, FourierModeCoefficient

ZERO = MultiIndex.zero()
E1, E2 = MultiIndex.unit(1), MultiIndex.unit(2)
TWO_E1 = MultiIndex.unit(1, 2)


def _stack(coefficient):
    assembly = AssemblyService(coefficient)
    block_system = BlockSystemService(assembly)
    return assembly, block_system, ErrorEstimator(assembly, block_system)


def _solve(block_system, space, f=1.0):
    op = block_system.assemble_operator(space)
    b = block_system.assemble_rhs(space, f)
    u = block_system.solve(op, b, tol=1e-12).solution
    return u, energy(b, u)


@pytest.fixture
def two_index_space(square4):
    meshes = {ZERO: square4, E1: square4}
    return MultilevelSpace(IndexSet.active(meshes), meshes, square4)


def test_indicator_shapes_and_totals(square4, two_index_space):
    _, block_system, estimator = _stack(FourierModeCoefficient())
    u, _ = _solve(block_system, two_index_space)
    Q = detail_set(two_index_space.index_set, 1)
    indicators = estimator.estimate(two_index_space, u, 1.0, Q)

    n_plus = len(new_interior_vertices(square4))
    assert set(indicators.spatial) == {ZERO, E1}
    assert all(values.shape == (n_plus,) for values in indicators.spatial.values())
    assert set(indicators.parametric) == set(Q)
    assert all(value >= 0 for value in indicators.parametric.values())
    assert indicators.est ** 2 == pytest.approx(indicators.est_x ** 2 + indicators.est_p ** 2)
    assert indicators.est_x > 0 and indicators.est_p > 0


def test_deterministic_problem_has_no_parametric_error(square4):
    _, block_system, estimator = _stack(AffineCoefficient([1.0]))
    space = MultilevelSpace.initial(square4)
    u, _ = _solve(block_system, space)
    indicators = estimator.estimate(space, u, 1.0, detail_set(space.index_set, 3))
    assert indicators.est_p == 0.0
    assert indicators.est == pytest.approx(indicators.est_x)
    assert indicators.est_x > 0


def test_spatial_indicators_vanish_for_zero_load(square4):
    _, block_system, estimator = _stack(FourierModeCoefficient())
    space = MultilevelSpace.initial(square4)
    u, _ = _solve(block_system, space, f=0.0)
    spatial = estimator.spatial_indicators(space, u, 0.0)
    assert not np.any(spatial[ZERO])


def test_parametric_indicator_of_first_mode_is_exact_lifting(square4):
    assembly, block_system, estimator = _stack(FourierModeCoefficient())
    space = MultilevelSpace.initial(square4)
    u, _ = _solve(block_system, space)
    value = estimator.parametric_indicators(space, u, IndexSet((E1,)))[E1]

    residual = -(1.0 / np.sqrt(3.0)) * (assembly.stiffness(square4, square4, 1) @ u[ZERO])
    K0 = assembly.stiffness(square4, square4, 0).toarray()
    expected = np.sqrt(residual @ np.linalg.solve(K0, residual))
    assert value == pytest.approx(expected, rel=1e-10)


def test_estimator_tracks_the_enriched_error(two_index_space):
    _, block_system, estimator = _stack(FourierModeCoefficient())
    u, _ = _solve(block_system, two_index_space)
    Q = detail_set(two_index_space.index_set, 1)
    ratio = estimator.theorem_ratio_check(two_index_space, u, 1.0, Q)
    assert ratio is not None
    assert np.isfinite(ratio)
    assert 0.2 <= ratio <= 5.0


@pytest.mark.parametrize("seed", range(10))
def test_estimate_to_error_ratio_is_bounded(seed, square4, refine_seeded):
    rng = np.random.default_rng(seed)
    indices = [(ZERO, E1), (ZERO, E1, E2), (ZERO, E1, TWO_E1)][seed % 3]
    meshes = {nu: refine_seeded(square4, rng, steps=1 + (i + seed) % 3) for i, nu in enumerate(indices)}
    space = MultilevelSpace(IndexSet.active(meshes), meshes, square4)
    _, block_system, estimator = _stack(FourierModeCoefficient())
    u, _ = _solve(block_system, space)
    ratio = estimator.theorem_ratio_check(space, u, 1.0, detail_set(space.index_set, 1))
    assert ratio is not None and np.isfinite(ratio)
    assert 0.2 <= ratio <= 5.0


def test_estimate_to_error_ratio_is_stable_under_refinement(two_index_space):
    _, block_system, estimator = _stack(FourierModeCoefficient())
    space, ratios = two_index_space, []
    for _ in range(4):
        u, _ = _solve(block_system, space)
        Q = detail_set(space.index_set, 1)
        ratios.append(estimator.theorem_ratio_check(space, u, 1.0, Q))
        indicators = estimator.estimate(space, u, 1.0, Q)
        space = refine_space(space, mark(indicators, MarkingConfig(criterion="C", theta=0.5), space))
    assert all(r is not None and 0.2 <= r <= 5.0 for r in ratios)
    assert max(ratios) / min(ratios) < 2.0


def test_enriched_check_respects_its_cap(two_index_space):
    _, block_system, estimator = _stack(FourierModeCoefficient())
    u, _ = _solve(block_system, two_index_space)
    with pytest.raises(EstimatorError):
        estimator.theorem_ratio_check(two_index_space, u, 1.0, IndexSet((MultiIndex.unit(2),)), cap=10)


def test_enriched_space_layout(square4, two_index_space):
    _, _, estimator = _stack(FourierModeCoefficient())
    Q = detail_set(two_index_space.index_set, 1)
    enriched = estimator.enriched_space(two_index_space, Q)
    assert len(enriched.index_set) == len(two_index_space.index_set) + len(Q)
    assert enriched.mesh_of(ZERO).n_elements == 4 * square4.n_elements
    assert all(enriched.mesh_of(nu) is square4 for nu in Q)


def test_reduction_ratio_after_one_refinement(square4):
    _, block_system, estimator = _stack(FourierModeCoefficient())
    space = MultilevelSpace.initial(square4)
    u, energy_old = _solve(block_system, space)
    Q = detail_set(space.index_set, 1)
    indicators = estimator.estimate(space, u, 1.0, Q)

    n_plus = len(new_interior_vertices(square4))
    marks = MarkResult(spatial_marks={ZERO: marked_from_positions(square4, np.arange(0, n_plus, 3))})
    new_space = refine_space(space, marks)
    _, energy_new = _solve(block_system, new_space)
    ratio = reduction_check(indicators, energy_old, new_space, energy_new)
    assert ratio is not None and ratio > 0


def test_retain_drops_meshes_outside_the_space(square4, refine_randomly):
    assembly, block_system, estimator = _stack(FourierModeCoefficient())
    refined = refine_randomly(square4, steps=2)
    meshes = {ZERO: refined, E1: refined}
    space = MultilevelSpace(IndexSet.active(meshes), meshes, square4)
    u, _ = _solve(block_system, space)
    estimator.estimate(space, u, 1.0, detail_set(space.index_set, 1))
    fine = estimator.fine_mesh(refined)
    assert estimator.fine_mesh(refined) is fine
    assert assembly.cached_matrix_count > 1

    estimator.retain(MultilevelSpace.initial(square4))
    # only K_0 of the initial mesh survives
    assert assembly.cached_matrix_count <= 1
    assert estimator.fine_mesh(refined) is not fine
