import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as O
from sphereimpute import (EngineOptions, FeatureMatrix, NumericalError, ObservedMatrix,
                          ParameterError, cost, evaluate, gradient, row_coefficients)
from sphereimpute import objective


def _instance(seed, n=6, m=5, p=4, k=2, fill=0.6):
    rng = np.random.default_rng(seed)
    A, mask, B, S = O.random_instance(rng, n, m, p, k, fill)
    return A, mask, B, S, ObservedMatrix.from_dense(A, mask), FeatureMatrix.dense(B)


def test_zero_values_give_zero_cost_and_gradient():
    A, mask, B, S, _, Bf = _instance(0)
    obs = ObservedMatrix.from_dense(np.zeros_like(A), mask)
    value = evaluate(S, obs, Bf, 1e6)
    assert value.cost == 0.0
    assert np.all(value.gradient == 0.0)


def test_small_gamma_limit():
    A, mask, B, S, obs, Bf = _instance(1)
    limit = np.sum((A * mask) ** 2) / A.shape[0]
    assert cost(S, obs, Bf, 1e-12) == pytest.approx(limit, rel=1e-9)


def test_cost_matches_dense_inverse_oracle():
    A, mask, B, S, obs, Bf = _instance(2)
    expected = O.cost_dense(S, A, mask, B, 10.0)
    assert cost(S, obs, Bf, 10.0) == pytest.approx(expected, rel=1e-10)
    assert O.cost_woodbury_dense(S, A, mask, B, 10.0) == pytest.approx(expected, rel=1e-10)


def test_gradient_matches_finite_differences_example():
    A, mask, B, S, obs, Bf = _instance(3)
    G = gradient(S, obs, Bf, 10.0)
    F = O.finite_difference_gradient(lambda X: O.cost_dense(X, A, mask, B, 10.0), S)
    np.testing.assert_allclose(G, F, rtol=1e-5)


@pytest.mark.parametrize("k", [1, 2, 5])
@pytest.mark.parametrize("gamma", [1.0, 1e3, 1e6])
def test_gradient_finite_differences_high_precision(k, gamma):
    rng = np.random.default_rng(100 * k + int(np.log10(gamma)))
    A, mask, B, S = O.random_instance(rng, 6, 7, max(k, 5), k)
    G = gradient(S, ObservedMatrix.from_dense(A, mask), FeatureMatrix.dense(B), gamma)
    F = O.fd_gradient_mp(S, A, mask, B, gamma)
    assert np.max(np.abs(G - F) / np.abs(F)) < 1e-5


def test_identity_gradient_column_support():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(5, 6))
    mask = rng.random((5, 6)) < 0.5
    mask[:, 2] = False
    S = rng.normal(size=(2, 6))
    obs = ObservedMatrix.from_dense(A, mask)
    rows = np.array([0, 1, 3])
    G = gradient(S, obs, FeatureMatrix.identity(6), 1e3, row_set=rows)
    seen = mask[rows].any(axis=0)
    assert np.all(G[:, ~seen] == 0.0)
    assert np.all(np.abs(G[:, seen]).sum(axis=0) > 0)


def test_fused_matches_separate_calls():
    A, mask, B, S, obs, Bf = _instance(5)
    value = evaluate(S, obs, Bf, 1e3)
    assert value.cost == cost(S, obs, Bf, 1e3)
    np.testing.assert_array_equal(value.gradient, gradient(S, obs, Bf, 1e3))


def test_one_factorization_per_nonempty_selected_row():
    A, mask, B, S, obs, Bf = _instance(6, n=12, m=8)
    mask[3] = False
    obs = ObservedMatrix.from_dense(A, mask)
    rows = np.arange(0, 12, 2)
    value = evaluate(S, obs, Bf, 1e6, row_set=rows)
    assert value.factorizations == int((mask[rows].sum(axis=1) > 0).sum())


def test_mean_counts_empty_selected_rows():
    A, mask, B, S, obs, Bf = _instance(7)
    mask[0] = False
    obs = ObservedMatrix.from_dense(A, mask)
    full = evaluate(S, obs, Bf, 1e3)
    rest = evaluate(S, obs, Bf, 1e3, row_set=np.arange(1, 6))
    assert full.cost == pytest.approx(rest.cost * 5 / 6, rel=1e-13)


def test_row_coefficients_match_high_precision():
    for seed, gamma in [(8, 1.0), (9, 1e3), (10, 1e6)]:
        A, mask, B, S, obs, Bf = _instance(seed)
        Z = row_coefficients(S, obs, Bf, gamma)
        for i in range(A.shape[0]):
            z_ref = O.coefficients_mp(S, A, mask, B, gamma, i)
            assert np.max(np.abs(Z[i] - z_ref)) <= 1e-10 * np.max(np.abs(z_ref))


def test_subsetted_equals_materialized_submatrix():
    A, mask, B, S, obs, Bf = _instance(11, n=9, m=7)
    rows, cols = np.array([0, 2, 3, 7]), np.array([1, 4, 5, 6])
    sub = ObservedMatrix.from_dense(A[np.ix_(rows, cols)], mask[np.ix_(rows, cols)])
    a = evaluate(S, obs, Bf, 1e6, rows, cols)
    b = evaluate(S, sub, FeatureMatrix.dense(B[:, cols]), 1e6)
    assert a.cost == pytest.approx(b.cost, rel=1e-14)
    np.testing.assert_allclose(a.gradient, b.gradient, rtol=1e-12, atol=1e-14)


@given(seed=st.integers(0, 10**6), log_gamma=st.floats(-2, 8))
def test_cost_nonnegative_and_decreasing_in_gamma(seed, log_gamma):
    A, mask, B, S, obs, Bf = _instance(seed)
    c1 = cost(S, obs, Bf, 10.0 ** log_gamma)
    c2 = cost(S, obs, Bf, 10.0 ** (log_gamma + 0.5))
    assert c1 >= 0 and c2 >= 0
    assert c2 <= c1 * (1 + 1e-12)


@given(seed=st.integers(0, 10**6), gamma=st.sampled_from([1.0, 1e3, 1e6]))
def test_cost_invariant_under_orthogonal_mixing(seed, gamma):
    A, mask, B, S, obs, Bf = _instance(seed)
    Q, _ = np.linalg.qr(np.random.default_rng(seed + 1).normal(size=(2, 2)))
    assert cost(Q @ S, obs, Bf, gamma) == pytest.approx(cost(S, obs, Bf, gamma), rel=1e-10)


def test_threaded_reduction(monkeypatch):
    rng = np.random.default_rng(12)
    A, mask, B, S = O.random_instance(rng, 300, 20, 6, 3, 0.5)
    obs, Bf = ObservedMatrix.from_dense(A, mask), FeatureMatrix.dense(B)
    monkeypatch.setattr(objective, "CHUNK_ENTRIES", 97)
    assert len(list(objective._row_chunks(obs.csr.indptr))) > 10
    serial = evaluate(S, obs, Bf, 1e6)
    det = evaluate(S, obs, Bf, 1e6, options=EngineOptions(threads=4, deterministic=True))
    fast = evaluate(S, obs, Bf, 1e6, options=EngineOptions(threads=4, deterministic=False))
    assert det.cost == serial.cost
    np.testing.assert_array_equal(det.gradient, serial.gradient)
    assert fast.cost == pytest.approx(serial.cost, rel=1e-10)
    np.testing.assert_allclose(fast.gradient, serial.gradient, rtol=1e-10)


def test_validation_errors():
    A, mask, B, S, obs, Bf = _instance(13)
    with pytest.raises(ParameterError, match="gamma"):
        evaluate(S, obs, Bf, 0.0)
    with pytest.raises(ParameterError):
        evaluate(S[:, :3], obs, Bf, 1.0)
    with pytest.raises(ParameterError):
        evaluate(S, obs, FeatureMatrix.dense(B[:, :3]), 1.0)
    with pytest.raises(ParameterError, match="row_set"):
        evaluate(S, obs, Bf, 1.0, row_set=[])


def test_cholesky_regularizes_then_fails():
    M = np.array([[[1.0, 1.0], [1.0, 1.0 - 1e-17]]])
    L = objective._cholesky(M)
    assert np.all(np.isfinite(L))
    with pytest.raises(NumericalError):
        objective._cholesky(np.array([[[1.0, 0.0], [0.0, -1.0]]]))
