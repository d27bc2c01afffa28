from math import factorial

import numpy as np
import pytest

from app.services.quadrature import collapsed_gauss, default_rule, symmetric_degree4


def _monomial_exact(a, b):
    # ∫ x^a y^b over the reference triangle
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("rule", [symmetric_degree4(), collapsed_gauss(4), collapsed_gauss(7)])
def test_rules_integrate_monomials_exactly(rule):
    assert np.isclose(rule.weights.sum(), 0.5)
    x, y = rule.points[:, 0], rule.points[:, 1]
    for a in range(rule.degree + 1):
        for b in range(rule.degree + 1 - a):
            approx = np.sum(rule.weights * x ** a * y ** b)
            assert approx == pytest.approx(_monomial_exact(a, b), rel=1e-12)


def test_points_lie_in_the_reference_triangle():
    for rule in (symmetric_degree4(), collapsed_gauss(7)):
        assert np.all(rule.points >= 0.0)
        assert np.all(rule.points.sum(axis=1) <= 1.0)


def test_map_to_physical_triangles():
    corners = np.array([
        [[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]],
        [[1.0, 1.0], [1.0, 2.0], [0.0, 1.0]],
    ])
    points, weights = default_rule().map_to(corners)
    assert points.shape == (2, 6, 2)
    np.testing.assert_allclose(weights.sum(axis=1), [1.0, 0.5])
    # ∫ x = area * centroid_x
    np.testing.assert_allclose(np.sum(weights * points[..., 0], axis=1), [1.0 * 2 / 3, 0.5 * 2 / 3])


def test_shape_values_partition_unity():
    np.testing.assert_allclose(default_rule().shape_values().sum(axis=1), 1.0)
