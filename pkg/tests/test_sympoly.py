import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equiset import sympoly as S


def test_basis_n3_k1():
    basis = S.enumerate_multi_indices(3, 1)
    assert sorted(basis.indices) == [(0,), (1,), (2,), (3,)]
    assert basis.t == 4


def test_basis_n2_k2():
    basis = S.enumerate_multi_indices(2, 2)
    assert set(basis.indices) == {(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)}
    assert basis.indices[:2] == ((1, 0), (0, 1))  # unit indices lead


def test_basis_n1_k3():
    assert S.enumerate_multi_indices(1, 3).t == 4


@pytest.mark.parametrize("n,k", [(0, 1), (1, 0)])
def test_basis_rejects_empty(n, k):
    with pytest.raises(ValueError):
        S.enumerate_multi_indices(n, k)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8))
def test_basis_size_is_binomial(n, k):
    basis = S.enumerate_multi_indices(n, k)
    assert basis.t == math.comb(n + k, k)
    assert len(set(basis.indices)) == basis.t
    assert all(sum(a) <= n for a in basis.indices)


def test_eval_monomial():
    assert S.eval_monomial([2.0, 3.0], (1, 1)) == 6.0
    assert S.eval_monomial([0.0, -7.5], (0, 0)) == 1.0
    assert S.eval_monomial([2.0], (3,)) == 8.0


def test_power_sum_values():
    X = [[1.0, 2.0], [3.0, 4.0]]
    assert S.power_sum(X, (1, 0)) == 4.0
    assert S.power_sum(X, (1, 1)) == 14.0
    assert S.power_sum(X, (1, 1), normalized=True) == 7.0


def test_b_alpha_values():
    X = np.array([[1.0], [2.0]])
    assert S.b_alpha(X, (0,)).tolist() == [1.0, 1.0]
    assert S.b_alpha(X, (1,)).tolist() == [1.0, 2.0]
    assert S.b_alpha(X[::-1], (2,)).tolist() == [4.0, 1.0]


def test_eval_poly_row_sum():
    basis = S.enumerate_multi_indices(2, 1)
    P = S.EquivariantPoly(basis, 1)
    expo = [0] * basis.t
    expo[basis.position((1,))] = 1
    P.add_term((0,), expo, 1.0)
    np.testing.assert_array_equal(S.eval_equivariant_poly(P, [[1.0], [2.0]]), [[3.0], [3.0]])


def test_poly_rejects_bad_index():
    basis = S.enumerate_multi_indices(2, 1)
    P = S.EquivariantPoly(basis, 1)
    with pytest.raises(ValueError):
        P.add_term((3,), [0] * basis.t, 1.0)


def test_symmetrize_hand_case():
    x = np.array([[2.0], [5.0]])
    out = S.symmetrize(lambda X: np.array([[X[0, 0]], [0.0]]), x)
    np.testing.assert_allclose(out, [[1.0], [2.5]], rtol=0, atol=1e-15)


def test_symmetrize_fixed_points():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 2))
    np.testing.assert_allclose(S.symmetrize(lambda Y: Y, X), X, atol=1e-14)
    const = np.arange(8.0).reshape(4, 2) * 0 + 3.0
    np.testing.assert_allclose(S.symmetrize(lambda Y: const, X), const, atol=1e-14)


def test_symmetrize_capacity():
    with pytest.raises(S.CapacityError):
        S.symmetrize(lambda Y: Y, np.zeros((9, 1)))


def test_check_equivariance_transmission():
    chk = S.check_equivariance(lambda X: np.ones((3, 3)) @ X, 3, 2, trials=5)
    assert chk.deviation <= 1e-15


def test_check_equivariance_catches_row_index():
    chk = S.check_equivariance(lambda X: np.arange(1.0, 3.0)[:, None] * X, 2, 1, trials=3)
    assert chk.deviation > 0 and not chk.passed
    assert chk.worst_perm == (1, 0)


def test_decompose_row_sum():
    rng = np.random.default_rng(1)
    pairs = [(x, np.full((2, 1), x.sum())) for x in rng.uniform(-1, 1, size=(20, 2, 1))]
    dec = S.decompose_equivariant_poly(pairs, 2, 1, 1)
    assert dec.residual <= 1e-8
    assert list(dec.poly.terms) == [(0,)]
    (expo, coef), = dec.poly.terms[(0,)].items()
    assert expo[dec.poly.basis.position((1,))] == 1 and sum(expo) == 1
    assert abs(coef[0] - 1.0) <= 1e-9


def test_decompose_identity():
    rng = np.random.default_rng(2)
    pairs = [(x, x[:, :1].copy()) for x in rng.uniform(-1, 1, size=(30, 3, 2))]
    dec = S.decompose_equivariant_poly(pairs, 3, 2, 2)
    assert dec.residual <= 1e-10
    zero = (0,) * dec.poly.basis.t
    assert list(dec.poly.terms) == [(1, 0)]
    assert abs(dec.poly.terms[(1, 0)][zero][0] - 1.0) <= 1e-9


def test_decompose_rank_error():
    with pytest.raises(S.RankError):
        S.decompose_equivariant_poly([(np.zeros((2, 1)), np.zeros((2, 1)))], 2, 1, 3)


@pytest.mark.parametrize("n,k", [(2, 1), (3, 1), (2, 2), (3, 2)])
def test_round_trip_200_samples(n, k):
    rng = np.random.default_rng(n * 10 + k)
    P = S.random_equivariant_poly(rng, n, k, n_terms=6, degree_cap=3, out_dim=2)
    pairs = [(X, S.eval_equivariant_poly(P, X)) for X in rng.uniform(-1, 1, size=(200, n, k))]
    dec = S.decompose_equivariant_poly(pairs, n, k, 3)
    assert dec.residual <= 1e-6


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_poly_is_equivariant(seed):
    rng = np.random.default_rng(seed)
    P = S.random_equivariant_poly(rng, 3, 2)
    X = rng.normal(size=(3, 2))
    perm = rng.permutation(3)
    lhs = S.eval_equivariant_poly(P, X[perm])
    rhs = S.eval_equivariant_poly(P, X)[perm]
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-10)


def test_pointwise_gap_floor_never_below_half():
    for f0 in np.linspace(-2, 3, 101):
        assert S.pointwise_gap_floor(f0) >= 0.5
    assert S.pointwise_gap_floor(0.5) == 0.5
