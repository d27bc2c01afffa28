'''
Tests for multi-indices, the Legendre recurrence and the coupling matrices.
'''
import numpy as np
import pytest
from scipy.special import roots_legendre

from app.exceptions import BasisError
from app.models.parametric import IndexSet, MultiIndex
from app.services.parametric_basis import build_G, coupling_terms, detail_set, recurrence_table, table_for

E1, E2, E3 = MultiIndex.unit(1), MultiIndex.unit(2), MultiIndex.unit(3)
ZERO = MultiIndex.zero()


def _legendre_gauss(n=30):
    nodes, weights = roots_legendre(n)
    return nodes, weights / 2.0


################
# Multi-indices #
################

def test_multi_index_queries():
    nu = MultiIndex.from_mapping({3: 2, 1: 1})
    assert nu[1] == 1 and nu[2] == 0 and nu[3] == 2
    assert nu.degree == 3
    assert nu.support == (1, 3)
    assert nu.max_entry == 2
    assert not nu.is_zero and ZERO.is_zero
    assert nu.to_text() == "(1 0 2)"
    assert nu.to_text(5) == "(1 0 2 0 0)"
    assert MultiIndex.parse("(1 0 2)") == nu
    assert MultiIndex.parse("(0)") == ZERO


def test_multi_index_shifts():
    assert E1.shifted(1, -1) == ZERO
    assert ZERO.shifted(2, -1) is None
    assert E1.shifted(2, +1) == MultiIndex.from_dense([1, 1])


@pytest.mark.parametrize("entries", [((0, 1),), ((1, -1),), ((2, 1), (2, 3))])
def test_invalid_multi_indices(entries):
    with pytest.raises(BasisError):
        MultiIndex(entries)


def test_index_set_order_and_statistics():
    P = IndexSet.active([MultiIndex.unit(1, 2), E2, ZERO, E1, E1])
    assert list(P) == [ZERO, E1, E2, MultiIndex.unit(1, 2)]
    assert P.position(E2) == 2
    assert P.support == (1, 2)
    assert P.n_parameters == 2
    assert P.degree == 2
    assert P.to_text() == "(0 0) (1 0) (0 1) (2 0)"
    with pytest.raises(BasisError):
        P.position(E3)
    with pytest.raises(BasisError):
        IndexSet.active([E1])


#####################
# Recurrence table  #
#####################

def test_first_recurrence_coefficients():
    table = recurrence_table(3)
    assert table.beta(0) == pytest.approx(1.0 / np.sqrt(3.0))
    assert table.beta(1) == pytest.approx(2.0 / np.sqrt(15.0))
    assert table.beta(-1) == 0.0
    with pytest.raises(BasisError):
        table.beta(4)
    with pytest.raises(BasisError):
        recurrence_table(-1)


def test_polynomials_are_orthonormal():
    table = recurrence_table(12)
    y, w = _legendre_gauss()
    values = np.array([table.evaluate(n, y) for n in range(13)])
    gram = (values * w) @ values.T
    np.testing.assert_allclose(gram, np.eye(13), atol=1e-12)


######################
# Coupling matrices  #
######################

def test_G0_is_the_identity_pattern():
    P = IndexSet.active([ZERO, E1, E2])
    Q = IndexSet([MultiIndex.unit(1, 2), E1])
    G = build_G(0, P, Q, table_for(P, Q)).matrix.toarray()
    np.testing.assert_array_equal(G, [[0, 0], [1, 0], [0, 0]])


def test_G1_matches_quadrature_single_parameter():
    P = IndexSet.active([MultiIndex.unit(1, k) for k in range(6)])
    table = table_for(P)
    y, w = _legendre_gauss()
    values = np.array([table.evaluate(k, y) for k in range(6)])
    oracle = (values * w * y) @ values.T
    G = build_G(1, P, P, table).matrix.toarray()
    np.testing.assert_allclose(G, oracle, atol=1e-12)


def test_G_matches_quadrature_two_parameters():
    P = IndexSet.active([ZERO, E1, E2, MultiIndex.from_dense([1, 1]), MultiIndex.unit(2, 2)])
    table = table_for(P)
    y, w = _legendre_gauss()
    for m in (1, 2):
        G = build_G(m, P, P, table).matrix.toarray()
        for i, nu in enumerate(P):
            for j, mu in enumerate(P):
                other = 3 - m
                if nu[other] != mu[other]:
                    expected = 0.0
                else:
                    expected = np.sum(w * y * table.evaluate(nu[m], y) * table.evaluate(mu[m], y))
                assert G[i, j] == pytest.approx(expected, abs=1e-12)
        np.testing.assert_allclose(G, G.T)


def test_G_rejects_entries_beyond_the_table():
    P = IndexSet.active([ZERO, MultiIndex.unit(1, 3)])
    with pytest.raises(BasisError):
        build_G(1, P, P, recurrence_table(1))


def test_coupling_terms_rows():
    P = IndexSet.active([ZERO, E1])
    terms = coupling_terms(P, P, table_for(P))
    beta0 = 1.0 / np.sqrt(3.0)
    assert [(mu, m) for mu, m, _ in terms[ZERO]] == [(ZERO, 0), (E1, 1)]
    assert terms[ZERO][1][2] == pytest.approx(beta0)
    assert [(mu, m) for mu, m, _ in terms[E1]] == [(ZERO, 1), (E1, 0)]


##############
# Detail set #
##############

def test_detail_set_of_the_initial_set():
    assert list(detail_set(IndexSet.initial(), 1)) == [E1]
    assert list(detail_set(IndexSet.initial(), 3)) == [E1, E2, E3]


def test_detail_set_neighbours():
    P = IndexSet.active([ZERO, E1])
    Q = detail_set(P, 1)
    assert set(Q) == {E2, MultiIndex.unit(1, 2), MultiIndex.from_dense([1, 1])}
    assert not set(Q) & set(P)


def test_detail_set_respects_the_parameter_cap():
    P = IndexSet.active([ZERO, E1])
    assert list(detail_set(P, 9, max_parameter=1)) == [MultiIndex.unit(1, 2)]
    assert set(detail_set(P, 9, max_parameter=9)) >= {MultiIndex.unit(9)}
    assert MultiIndex.unit(10) not in detail_set(P, 9, max_parameter=9)
    with pytest.raises(BasisError):
        detail_set(P, 0)
