import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmidas.basis import (
    SCHEMES,
    build_weight_matrix,
    compress_lag_stack,
    exponential_almon_weights,
    implied_inverse_length_scale,
)


def test_unrestricted_is_identity():
    W = build_weight_matrix("u", 3)
    np.testing.assert_array_equal(W.values, np.eye(3))
    assert W.n_cols == 3


def test_bridge_equal_weights():
    W = build_weight_matrix("br", 12)
    assert W.values.shape == (12, 1)
    np.testing.assert_allclose(W.values, 1.0 / 12)


def test_xalm_zero_thetas_equal_weights():
    W = build_weight_matrix("xalm", 4, theta=(0.0, 0.0))
    np.testing.assert_allclose(W.values[:, 0], [0.25, 0.25, 0.25, 0.25])


def test_xalm_zero_reproduces_bridge_exactly():
    for n in (1, 3, 12):
        xalm = build_weight_matrix("xalm", n, theta=(0.0, 0.0))
        br = build_weight_matrix("br", n)
        np.testing.assert_array_equal(xalm.values, br.values)


def test_legendre_base_cases():
    W = build_weight_matrix("leg", 2, degree=1)
    np.testing.assert_allclose(W.values[:, 0], [1.0, 1.0])
    np.testing.assert_allclose(W.values[:, 1], [-1.0, 1.0])


def test_legendre_second_degree_closed_form():
    # construct a 3-lag grid whose shifted arguments hit -1, 0, 1
    W = build_weight_matrix("leg", 3, degree=2)
    np.testing.assert_allclose(W.values[:, 2], [1.0, -0.5, 1.0], atol=1e-12)


def test_bernstein_endpoint_row():
    W = build_weight_matrix("ber", 12, degree=3)
    np.testing.assert_allclose(W.values[0], [1.0, 0.0, 0.0, 0.0], atol=0)


def test_bernstein_rows_sum_to_one():
    W = build_weight_matrix("ber", 12, degree=3)
    np.testing.assert_allclose(W.values.sum(axis=1), np.ones(12), atol=1e-12)


def test_fourier_first_column_and_frequency():
    W = build_weight_matrix("fou", 12, degree=3, m=3)
    np.testing.assert_allclose(W.values[:, 0], 1.0)
    omega = 2.0 * np.pi / 9.0
    p = np.arange(12.0)
    np.testing.assert_allclose(W.values[:, 1], np.cos(omega * p), atol=1e-12)
    np.testing.assert_allclose(W.values[:, 2], np.sin(2 * omega * p), atol=1e-12)
    np.testing.assert_allclose(W.values[:, 3], np.cos(3 * omega * p), atol=1e-12)


@pytest.mark.parametrize(
    "scheme,kwargs,err",
    [
        ("nope", {}, "unknown"),
        ("alm", {"degree": 0}, "degree"),
        ("xalm", {}, "theta"),
        ("ber", {"n_lags": 1, "degree": 2}, "n_lags"),
    ],
)
def test_errors(scheme, kwargs, err):
    n_lags = kwargs.pop("n_lags", 12)
    with pytest.raises(ValueError, match=err):
        build_weight_matrix(scheme, n_lags, **kwargs)


@settings(max_examples=200, deadline=None)
@given(
    theta1=st.floats(-5, 5, allow_nan=False),
    theta2=st.floats(-5, 5, allow_nan=False),
    n_lags=st.integers(1, 24),
)
def test_xalm_weights_simplex(theta1, theta2, n_lags):
    w = exponential_almon_weights(n_lags, theta1, theta2)
    assert np.all(np.isfinite(w))
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) < 1e-12


@pytest.mark.parametrize("scheme", SCHEMES)
def test_weight_matrices_finite_and_psd(scheme):
    theta = (0.3, -0.05) if scheme == "xalm" else None
    W = build_weight_matrix(scheme, 12, degree=3, m=3, theta=theta)
    assert np.all(np.isfinite(W.values))
    gram = W.values @ W.values.T
    eigs = np.linalg.eigvalsh(gram)
    assert eigs.min() >= -1e-10


def test_implied_length_scale_bridge_block():
    ils = implied_inverse_length_scale(build_weight_matrix("br", 12), 1.0, 1)
    np.testing.assert_allclose(ils.block, np.full((12, 12), 1.0 / 144.0), atol=1e-15)


def test_implied_length_scale_identity_blocks():
    ils = implied_inverse_length_scale(build_weight_matrix("u", 3), 2.0, 2)
    np.testing.assert_allclose(ils.block, 2.0 * np.eye(3))
    full = ils.full_matrix()
    assert full.shape == (6, 6)
    np.testing.assert_allclose(full, np.kron(np.eye(2), 2.0 * np.eye(3)))


def test_implied_length_scale_xalm_equal():
    W = build_weight_matrix("xalm", 2, theta=(0.0, 0.0))
    ils = implied_inverse_length_scale(W, 1.0, 1)
    np.testing.assert_allclose(ils.block, np.full((2, 2), 0.25), atol=1e-15)


def test_implied_block_symmetric_psd():
    W = build_weight_matrix("leg", 12, degree=3)
    ils = implied_inverse_length_scale(W, 0.7, 1)
    np.testing.assert_array_equal(ils.block, ils.block.T)
    assert np.linalg.eigvalsh(ils.block).min() >= -1e-10


def test_compress_lag_stack_matches_kron():
    rng = np.random.default_rng(0)
    W = build_weight_matrix("leg", 6, degree=2)
    Z = rng.standard_normal((5, 3 * 6))
    manual = Z @ np.kron(np.eye(3), W.values)
    np.testing.assert_allclose(compress_lag_stack(Z, W, 3), manual, atol=1e-12)
