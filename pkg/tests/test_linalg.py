import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spectralrg.linalg import (
    DimensionError,
    NumericError,
    clamp_nonneg,
    det_k,
    log_det_k,
    spectral_norm,
    top_singular_values,
)

finite_elements = st.floats(-10, 10, allow_nan=False, allow_infinity=False, width=64)


def small_matrices(max_dim=6):
    return st.integers(1, max_dim).flatmap(
        lambda r: st.integers(1, max_dim).flatmap(
            lambda c: arrays(np.float64, (r, c), elements=finite_elements)
        )
    )


def test_top_singular_values_identity():
    np.testing.assert_allclose(top_singular_values(np.eye(3), 2), [1.0, 1.0])


def test_top_singular_values_diagonal():
    np.testing.assert_allclose(top_singular_values(np.diag([3.0, 2.0, 1.0]), 3), [3, 2, 1])


def test_top_singular_values_matches_eigendecomposition_oracle():
    rng = np.random.default_rng(42)
    m = rng.standard_normal((5, 4))
    # independent oracle: singular values are sqrt of eigenvalues of M^T M
    eig = np.sort(np.linalg.eigvalsh(m.T @ m))[::-1]
    oracle = np.sqrt(np.clip(eig, 0, None))
    got = top_singular_values(m, 4)
    np.testing.assert_allclose(got, oracle, rtol=1e-9)


def test_top_singular_values_dimension_error():
    with pytest.raises(DimensionError):
        top_singular_values(np.eye(3), 4)
    with pytest.raises(DimensionError):
        top_singular_values(np.eye(3), 0)


def test_non_finite_entries_rejected():
    m = np.eye(2)
    m[0, 1] = np.nan
    with pytest.raises(NumericError):
        top_singular_values(m, 1)
    with pytest.raises(NumericError):
        spectral_norm(np.array([[np.inf]]))


def test_det_k_identity():
    assert det_k(np.eye(4), 4) == pytest.approx(1.0)


def test_det_k_diagonal_product():
    assert det_k(np.diag([3.0, 2.0, 1.0]), 2) == pytest.approx(6.0)


def test_det_k_rank_deficient_is_zero():
    rng = np.random.default_rng(7)
    m = np.outer(rng.standard_normal(3), rng.standard_normal(3))  # rank 1
    assert det_k(m, 2) <= 1e-10
    assert det_k(m, 2) == 0.0  # snapped exactly


def test_log_det_k_raises_on_rank_deficiency():
    with pytest.raises(NumericError):
        log_det_k(np.diag([1.0, 0.0]), 2)


def test_spectral_norm_zero_and_diag():
    assert spectral_norm(np.zeros((3, 2))) == 0.0
    assert spectral_norm(np.diag([3.0, 2.0, 1.0])) == pytest.approx(3.0)


def test_spectral_norm_matches_power_iteration_oracle():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((6, 5))
    # independent oracle: power iteration on M^T M
    v = rng.standard_normal(5)
    v /= np.linalg.norm(v)
    g = m.T @ m
    for _ in range(3000):
        v = g @ v
        v /= np.linalg.norm(v)
    oracle = math.sqrt(float(v @ g @ v))
    assert spectral_norm(m) == pytest.approx(oracle, rel=1e-8)


def test_clamp_nonneg_examples():
    assert clamp_nonneg(-2.0) == 0.0
    assert clamp_nonneg(0.0) == 0.0
    assert clamp_nonneg(3.5) == 3.5
    with pytest.raises(NumericError):
        clamp_nonneg(float("nan"))


@settings(max_examples=60, deadline=None)
@given(small_matrices())
def test_spectrum_invariant_under_transposition(m):
    k = min(m.shape)
    np.testing.assert_allclose(
        top_singular_values(m, k), top_singular_values(m.T, k), rtol=1e-10, atol=1e-10
    )


@settings(max_examples=60, deadline=None)
@given(small_matrices())
def test_det_k_equals_exp_sum_log(m):
    k = min(m.shape)
    sv = top_singular_values(m, k)
    if np.all(sv > 1e-8):
        assert det_k(m, k) == pytest.approx(math.exp(float(np.sum(np.log(sv)))), rel=1e-10)


def test_spectral_norm_submultiplicative_on_random_instances():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((3, 5))
        assert spectral_norm(a @ b) <= spectral_norm(a) * spectral_norm(b) * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_weyl_perturbation_bound(rows, cols, seed):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((rows, cols))
    e = rng.standard_normal((rows, cols)) * rng.uniform(0, 2)
    sm = np.linalg.svd(m, compute_uv=False)
    sme = np.linalg.svd(m + e, compute_uv=False)
    assert np.max(np.abs(sme - sm)) <= spectral_norm(e) + 1e-9
