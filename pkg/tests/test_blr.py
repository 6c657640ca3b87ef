import numpy as np
from scipy.integrate import cumulative_trapezoid

from bmidas.blr import (
    HorseshoeState,
    beta_posterior_moments,
    sample_beta,
    update_horseshoe,
)


def test_vanishing_prior_variance_shrinks_to_zero():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 4))
    y = rng.standard_normal(30) * 3
    state = HorseshoeState.initial(4)
    state.tau2 = 1e-12
    state.lam2 = np.full(4, 1e-12)
    draws = np.array([sample_beta(X, y, np.ones(30), state, rng) for _ in range(50)])
    assert np.max(np.abs(draws)) < 1e-4


def test_orthonormal_diffuse_prior_gives_ols():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((40, 5)))
    y = rng.standard_normal(40)
    state = HorseshoeState.initial(5)
    state.tau2 = 1e8
    draws = np.array([sample_beta(Q, y, np.ones(40), state, rng) for _ in range(4000)])
    np.testing.assert_allclose(draws.mean(axis=0), Q.T @ y, atol=0.1)


def test_fast_path_matches_dense_moments_quick():
    # scaled-down version of the fast/dense equivalence check
    rng = np.random.default_rng(2)
    T, M = 6, 20
    X = rng.standard_normal((T, M))
    y = rng.standard_normal(T)
    Sigma = rng.uniform(0.5, 1.5, size=T)
    state = HorseshoeState.initial(M)
    state.tau2 = 0.5
    state.lam2 = rng.uniform(0.2, 2.0, size=M)
    mean, cov = beta_posterior_moments(X, y, Sigma, state.prior_variances())
    n = 20000
    draws = np.array([sample_beta(X, y, Sigma, state, rng) for _ in range(n)])
    se_mean = np.sqrt(np.diag(cov) / n)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 6 * se_mean)
    sample_cov = np.cov(draws.T)
    se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
    assert np.all(np.abs(sample_cov - cov) < 6 * se_cov)


def test_dense_path_matches_moments():
    rng = np.random.default_rng(3)
    T, M = 40, 5
    X = rng.standard_normal((T, M))
    y = rng.standard_normal(T)
    Sigma = rng.uniform(0.5, 1.5, size=T)
    state = HorseshoeState.initial(M)
    mean, cov = beta_posterior_moments(X, y, Sigma, state.prior_variances())
    n = 20000
    draws = np.array([sample_beta(X, y, Sigma, state, rng) for _ in range(n)])
    se_mean = np.sqrt(np.diag(cov) / n)
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 6 * se_mean)


def test_tau2_conditional_with_zero_beta():
    # beta = 0 leaves tau^2 | . ~ IG((M+1)/2, 1/aux_tau)
    rng = np.random.default_rng(4)
    M = 9
    state = HorseshoeState.initial(M)
    state.aux_tau = 2.0
    draws = []
    for _ in range(20000):
        new = update_horseshoe(state, np.zeros(M), rng)
        draws.append(new.tau2)
    inv = 1.0 / np.array(draws)
    # 1/tau^2 ~ Gamma(shape=(M+1)/2, rate=1/aux_tau): mean = shape * aux_tau
    want = (M + 1) / 2.0 * state.aux_tau
    assert abs(inv.mean() - want) / want < 0.05


def test_scales_strictly_positive():
    rng = np.random.default_rng(5)
    state = HorseshoeState.initial(3)
    beta = np.array([0.0, 1e-8, 5.0])
    for _ in range(20000):
        state = update_horseshoe(state, beta, rng)
        assert state.tau2 > 0
        assert np.all(state.lam2 > 0)
        assert state.aux_tau > 0
        assert np.all(state.aux_lam > 0)


def half_cauchy_sq_cdf_grid():
    """CDF of the squared local scale by integrating the mixture numerically.

    Marginal density p(x) = int IG(x; 1/2, 1/u) IG(u; 1/2, 1) du evaluated on
    a fine log grid, then accumulated by trapezoid.
    """
    from scipy.stats import invgamma

    x = np.logspace(-8, 8, 4001)
    u = np.logspace(-8, 8, 2001)
    pdf_u = invgamma.pdf(u, 0.5, scale=1.0)
    inner = np.array(
        [np.trapezoid(invgamma.pdf(xi, 0.5, scale=1.0 / u) * pdf_u, u) for xi in x]
    )
    cdf = cumulative_trapezoid(inner, x, initial=0.0)
    cdf /= cdf[-1]
    return x, cdf


def test_prior_only_gibbs_matches_grid_oracle():
    # M=1: alternating prior draws of beta with the four conditionals must
    # leave the half-Cauchy-squared marginal of the local scale invariant
    x_grid, cdf_grid = half_cauchy_sq_cdf_grid()
    # sanity: the grid oracle agrees with the closed-form arctan CDF
    closed = 2.0 / np.pi * np.arctan(np.sqrt(x_grid))
    assert np.max(np.abs(cdf_grid - closed)) < 5e-3

    rng = np.random.default_rng(6)
    state = HorseshoeState.initial(1)
    draws = []
    for i in range(120000):
        beta = np.sqrt(max(state.tau2 * state.lam2[0], 1e-12)) * rng.standard_normal(1)
        state = update_horseshoe(state, beta, rng)
        if i % 6 == 0:
            draws.append(state.lam2[0])
    draws = np.sort(np.array(draws))
    emp = (np.arange(len(draws)) + 1) / len(draws)
    theo = np.interp(draws, x_grid, cdf_grid, left=0.0, right=1.0)
    ks = np.max(np.abs(emp - theo))
    assert ks < 0.02, f"KS distance {ks:.4f}"


def test_shrinkage_separates_signals_from_nulls():
    rng = np.random.default_rng(7)
    T, n_signal, n_null = 100, 5, 50
    X = rng.standard_normal((T, n_signal + n_null))
    beta_true = np.zeros(n_signal + n_null)
    beta_true[:n_signal] = np.array([2.0, -2.0, 1.5, -1.5, 2.5])
    y = X @ beta_true + 0.5 * rng.standard_normal(T)
    state = HorseshoeState.initial(n_signal + n_null)
    Sigma = np.full(T, 0.25)
    abs_sum = np.zeros(n_signal + n_null)
    n_keep = 0
    for i in range(600):
        beta = sample_beta(X, y, Sigma, state, rng)
        state = update_horseshoe(state, beta, rng)
        if i >= 100:
            abs_sum += np.abs(beta)
            n_keep += 1
    mean_abs = abs_sum / n_keep
    assert mean_abs[:n_signal].mean() > 5 * mean_abs[n_signal:].mean()
