'''
Tests for Dörfler selection and the three marking criteria.
'''
from itertools import combinations

import numpy as np
import pytest

from app.exceptions import ConfigurationError
from app.models.indicators import Indicators
from app.models.parametric import IndexSet, MultiIndex
from app.models.run import MarkingConfig
from app.models.space import MultilevelSpace
from app.services.marking_service import (
    doerfler_min,
    doerfler_select,
    mark,
    mark_criterion_A,
    mark_criterion_B,
    mark_criterion_C,
    shared_marks,
)
from app.services.mesh_service import marked_from_positions, new_interior_vertices

ZERO = MultiIndex.zero()
E1, E2 = MultiIndex.unit(1), MultiIndex.unit(2)


def make_indicators(mesh, spatial, parametric):
    '''
    Indicators on the initial space of ``mesh``: ``spatial`` maps N+
    positions to values, ``parametric`` maps detail indices to values.
    '''
    space = MultilevelSpace.initial(mesh)
    values = np.zeros(len(new_interior_vertices(mesh)))
    for position, value in spatial.items():
        values[position] = value
    return Indicators(space, IndexSet(tuple(parametric)), {ZERO: values}, dict(parametric))


#####################
# Dörfler selection #
#####################

def test_select_reaches_half_with_the_largest_value():
    values = np.sqrt([9.0, 4.0, 2.0, 1.0])
    np.testing.assert_array_equal(doerfler_select(values, 0.5), [0])
    np.testing.assert_array_equal(doerfler_select(values, 0.75), [0, 1])


def test_select_everything_nonzero_at_theta_one():
    np.testing.assert_array_equal(np.sort(doerfler_select(np.array([3.0, 0.0, 1.0]), 1.0)), [0, 2])


def test_select_nothing_from_zero_indicators():
    assert doerfler_select(np.zeros(5), 0.5).size == 0
    assert doerfler_select(np.zeros(0), 0.5).size == 0


def test_ties_are_broken_by_position():
    np.testing.assert_array_equal(doerfler_select(np.ones(4), 0.5), [0, 1])


@pytest.mark.parametrize("theta", [0.0, -0.1, 1.5])
def test_invalid_theta(theta):
    with pytest.raises(ConfigurationError):
        doerfler_select(np.ones(3), theta)


@pytest.mark.parametrize("values", [[1.0, -1.0], [1.0, np.nan], [np.inf]])
def test_invalid_values(values):
    with pytest.raises(ValueError):
        doerfler_select(np.array(values), 0.5)


@pytest.mark.parametrize("theta", [0.1, 0.3, 0.5, 0.8, 0.95])
def test_selection_is_minimal(theta, rng):
    values = rng.random(8)
    squares = values ** 2
    picked = doerfler_select(values, theta)
    assert squares[picked].sum() >= theta * squares.sum()
    for subset in combinations(range(values.size), picked.size - 1):
        assert squares[list(subset)].sum() < theta * squares.sum()


def test_selection_grows_with_theta(rng):
    values = rng.random(30)
    previous = np.zeros(0, dtype=np.int64)
    for theta in np.linspace(0.05, 1.0, 20):
        picked = doerfler_select(values, theta)
        assert picked.size >= previous.size
        np.testing.assert_array_equal(picked[:previous.size], previous)
        previous = picked


def test_doerfler_min_returns_keys():
    pairs = [("a", 1.0), ("b", 3.0), ("c", 2.0)]
    assert doerfler_min(pairs, 0.5) == {"b"}
    assert doerfler_min(pairs, 1.0) == {"a", "b", "c"}


####################
# Marking criteria #
####################

def test_config_validation():
    with pytest.raises(ConfigurationError):
        MarkingConfig(criterion="D")
    with pytest.raises(ConfigurationError):
        MarkingConfig(theta_x=0.0)
    with pytest.raises(ConfigurationError):
        MarkingConfig(vartheta=0.0)


def test_criterion_A_prefers_space_when_spatial_error_dominates(square4):
    indicators = make_indicators(square4, {0: np.sqrt(10.0)}, {E1: np.sqrt(5.0)})
    result = mark_criterion_A(indicators, MarkingConfig(criterion="A"))
    assert result.branch == "spatial"
    np.testing.assert_array_equal(result.spatial_marks[ZERO].pairs,
                                  marked_from_positions(square4, [0]).pairs)


def test_criterion_A_weighting_switches_to_parameters(square4):
    indicators = make_indicators(square4, {0: np.sqrt(10.0)}, {E1: np.sqrt(2.0)})
    result = mark_criterion_A(indicators, MarkingConfig(criterion="A", vartheta=8.0))
    assert result.branch == "parametric"
    assert result.parametric_marks == (E1,)


def test_criterion_B_compares_realised_refinement(square4):
    config = MarkingConfig(criterion="B")
    indicators = make_indicators(square4, {0: np.sqrt(10.0)}, {E1: 1.0})
    result = mark_criterion_B(indicators, config, indicators.space)
    assert result.branch == "spatial"

    indicators = make_indicators(square4, {0: np.sqrt(10.0)}, {E1: 10.0})
    result = mark_criterion_B(indicators, config, indicators.space)
    assert result.parametric_marks == (E1,)


def test_criterion_B_with_zero_indicators_marks_nothing(square4):
    indicators = make_indicators(square4, {}, {E1: 0.0})
    result = mark_criterion_B(indicators, MarkingConfig(criterion="B"), indicators.space)
    assert result.is_empty
    assert result.branch == "none"


def test_criterion_C_single_joint_selection(square4):
    indicators = make_indicators(square4, {3: 2.0}, {E1: 3.0, E2: 1.0})
    result = mark_criterion_C(indicators, MarkingConfig(criterion="C", theta=0.5))
    assert result.branch == "parametric"
    assert result.parametric_marks == (E1,)

    result = mark_criterion_C(indicators, MarkingConfig(criterion="C", theta=0.8))
    assert result.branch == "both"
    assert result.n_spatial == 1 and result.parametric_marks == (E1,)


def test_mark_dispatch_and_shared_marks(square4):
    indicators = make_indicators(square4, {0: 5.0, 7: 4.0}, {E1: 0.1})
    result = mark(indicators, MarkingConfig(criterion="C", theta=0.9), indicators.space)
    assert result.n_spatial == 2
    union = shared_marks(result)
    assert len(union) == 2
    np.testing.assert_array_equal(union.pairs, marked_from_positions(square4, [0, 7]).pairs)
