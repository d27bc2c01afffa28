'''
Tests for the benchmark coefficient families and the named problems.
'''
import numpy as np
import pytest

from app.exceptions import ConfigurationError
from app.models.problem import DOMAIN_LSHAPE, DOMAIN_SQUARE, DomainSpec
from app.services.mesh_service import initial_mesh
from app.services.problem_library import (
    AMPLITUDE,
    COOKIE_AMPLITUDES,
    COOKIE_RADIUS,
    PROBLEMS,
    CookieCoefficient,
    FourierModeCoefficient,
    benchmark_coefficient,
    cookie_center,
    cookie_coefficient,
    fourier_frequencies,
    get_problem,
    point_triangle_distance,
)
from app.services.quadrature import default_rule


###########
# Fourier #
###########

def test_amplitude():
    assert AMPLITUDE == pytest.approx(0.9 * 6.0 / np.pi ** 2)
    assert AMPLITUDE == pytest.approx(0.547, abs=1e-3)


@pytest.mark.parametrize("m,expected", [(1, (0, 1)), (2, (1, 0)), (3, (0, 2)), (4, (1, 1)), (5, (2, 0)), (6, (0, 3))])
def test_fourier_frequencies(m, expected):
    assert fourier_frequencies(m) == expected


def test_fourier_modes_decay(rng):
    field = FourierModeCoefficient()
    x = rng.random((200, 2))
    np.testing.assert_allclose(field.evaluate(0, x), 1.0)
    for m in (1, 2, 7):
        assert np.abs(field.evaluate(m, x)).max() <= AMPLITUDE / m ** 2 + 1e-15
    # a_1 = A cos(2π x_2)
    np.testing.assert_allclose(field.evaluate(1, x), AMPLITUDE * np.cos(2 * np.pi * x[:, 1]))
    assert field.tau_bound() == pytest.approx(0.9)
    assert not field.is_zero(10_000)


def test_coefficient_factories_reject_negative_indices():
    with pytest.raises(ConfigurationError):
        benchmark_coefficient(-1)
    with pytest.raises(ConfigurationError):
        cookie_coefficient(-1)
    np.testing.assert_allclose(benchmark_coefficient(0)(np.zeros((3, 2))), 1.0)


##########
# Cookie #
##########

def test_cookie_centers():
    np.testing.assert_allclose(cookie_center(1), [1 / 6, 1 / 6])
    np.testing.assert_allclose(cookie_center(3), [5 / 6, 1 / 6])
    np.testing.assert_allclose(cookie_center(5), [0.5, 0.5])
    np.testing.assert_allclose(cookie_center(7), [1 / 6, 5 / 6])


def test_cookie_disks_are_disjoint_and_inside():
    centers = np.array([cookie_center(m) for m in range(1, 10)])
    gaps = np.linalg.norm(centers[:, None] - centers[None], axis=2) + np.eye(9)
    assert gaps.min() > 2 * COOKIE_RADIUS
    assert np.all(centers - COOKIE_RADIUS > 0) and np.all(centers + COOKIE_RADIUS < 1)


def test_cookie_amplitudes_and_tau():
    field = CookieCoefficient()
    assert field.max_active_m == 9
    assert field.tau_bound() == pytest.approx(0.9)
    for m in range(1, 10):
        assert field.evaluate(m, cookie_center(m)[None])[0] == pytest.approx(COOKIE_AMPLITUDES[m])
        assert field.evaluate(m, np.array([[0.0, 0.0]]))[0] == 0.0
    assert field.is_zero(10)
    assert not np.any(field.evaluate(10, np.full((4, 2), 0.5)))


def test_point_triangle_distance():
    corners = np.array([[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]] * 3)
    points = [np.array([0.2, 0.2]), np.array([-1.0, 0.0]), np.array([1.0, 1.0])]
    values = [point_triangle_distance(p, corners[:1])[0] for p in points]
    np.testing.assert_allclose(values, [0.0, 1.0, np.sqrt(0.5)])


def test_cookie_cell_integrals():
    field = CookieCoefficient()
    quad = default_rule()
    inner = np.array([[[0.5, 0.5], [0.52, 0.5], [0.5, 0.52]]])
    outer = np.array([[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1]]])
    assert field.cell_integrals(5, inner, quad)[0] == pytest.approx(0.9 * 0.0002)
    assert field.cell_integrals(5, outer, quad)[0] == 0.0

    corners = initial_mesh(DomainSpec(DOMAIN_SQUARE, 32)).corners
    for m in (1, 5, 8):
        total = field.cell_integrals(m, corners, quad).sum()
        assert total == pytest.approx(COOKIE_AMPLITUDES[m] * np.pi * COOKIE_RADIUS ** 2, rel=5e-2)


####################
# Named problems   #
####################

def test_named_problem_defaults():
    assert PROBLEMS == ["benchmark-square", "benchmark-lshape", "cookie"]

    square = get_problem("benchmark-square")
    assert square.domain == DomainSpec(DOMAIN_SQUARE, 16)
    assert square.default_tol == pytest.approx(6e-4)
    assert square.default_m_bar == 1
    assert square.max_parameter is None

    lshape = get_problem("benchmark-lshape")
    assert lshape.domain == DomainSpec(DOMAIN_LSHAPE, 8)
    assert lshape.default_tol == pytest.approx(2.5e-3)

    cookie = get_problem("cookie", grid=8)
    assert cookie.domain.n == 8
    assert cookie.default_m_bar == 9
    assert cookie.max_parameter == 9
    assert cookie.f == 1.0


def test_each_lookup_builds_a_fresh_coefficient():
    assert get_problem("cookie").coefficient is not get_problem("cookie").coefficient


def test_unknown_problem():
    with pytest.raises(ConfigurationError):
        get_problem("poisson")
