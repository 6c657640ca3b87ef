"""Conditionally linear mean with horseshoe global-local shrinkage.

Coefficients carry a Gaussian scale mixture prior with one global and M
local scales, each half-Cauchy, represented through inverse-Gamma
auxiliaries so every conditional is inverse Gamma.  Coefficient draws use a
dense Cholesky when T >= M and switch to the low-rank sampling identity
(working in the T x T system) when T < M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

VAR_FLOOR = 1e-12


@dataclass
class HorseshoeState:
    """Shrinkage scales, their auxiliaries, and the current coefficients."""

    tau2: float
    lam2: np.ndarray
    aux_tau: float
    aux_lam: np.ndarray
    beta: np.ndarray

    @classmethod
    def initial(cls, n_coef: int) -> "HorseshoeState":
        return cls(
            tau2=1.0,
            lam2=np.ones(n_coef),
            aux_tau=1.0,
            aux_lam=np.ones(n_coef),
            beta=np.zeros(n_coef),
        )

    def prior_variances(self) -> np.ndarray:
        return np.maximum(self.tau2 * self.lam2, VAR_FLOOR)


def _sample_beta_dense(Xw, yw, prior_var, rng):
    M = Xw.shape[1]
    P = Xw.T @ Xw
    P[np.diag_indices(M)] += 1.0 / prior_var
    cf = cho_factor(P, lower=True)
    mean = cho_solve(cf, Xw.T @ yw)
    # solve L' u = z gives a draw with covariance P^{-1}
    z = rng.standard_normal(M)
    u = solve_triangular(cf[0], z, lower=True, trans="T")
    return mean + u


def _sample_beta_fast(Xw, yw, prior_var, rng):
    T = Xw.shape[0]
    u = np.sqrt(prior_var) * rng.standard_normal(len(prior_var))
    d = rng.standard_normal(T)
    v = Xw @ u + d
    G = (Xw * prior_var) @ Xw.T
    G[np.diag_indices(T)] += 1.0
    for jitter in (0.0, 1e-10, 1e-8, 1e-6):
        try:
            cf = cho_factor(G + jitter * np.eye(T), lower=True)
            break
        except np.linalg.LinAlgError:
            continue
    else:
        raise RuntimeError("fast-path system singular after maximum jitter")
    w = cho_solve(cf, yw - v)
    return u + prior_var * (Xw.T @ w)


def sample_beta(
    X: np.ndarray,
    y: np.ndarray,
    Sigma: np.ndarray,
    state: HorseshoeState,
    rng: np.random.Generator,
) -> np.ndarray:
    """Exact draw from the conditional Gaussian posterior of the coefficients.

    ``Sigma`` is the diagonal of the observation variance.  The T x T
    low-rank route is used when T < M, the M x M Cholesky otherwise; both
    target the same distribution.
    """
    sd = np.sqrt(np.asarray(Sigma, dtype=float))
    Xw = X / sd[:, None]
    yw = y / sd
    prior_var = state.prior_variances()
    if X.shape[0] < X.shape[1]:
        return _sample_beta_fast(Xw, yw, prior_var, rng)
    return _sample_beta_dense(Xw, yw, prior_var, rng)


def beta_posterior_moments(X, y, Sigma, prior_var):
    """Closed-form mean and covariance of the coefficient conditional (dense)."""
    sd = np.sqrt(np.asarray(Sigma, dtype=float))
    Xw = X / sd[:, None]
    yw = y / sd
    P = Xw.T @ Xw + np.diag(1.0 / prior_var)
    V = np.linalg.inv(P)
    V = (V + V.T) / 2.0
    return V @ (Xw.T @ yw), V


def _inv_gamma(shape, scale, rng, size=None):
    return scale / rng.gamma(shape, 1.0, size=size)


def update_horseshoe(
    state: HorseshoeState, beta: np.ndarray, rng: np.random.Generator
) -> HorseshoeState:
    """One sweep of the four inverse-Gamma conditionals.

    Order: global scale, local scales, global auxiliary, local auxiliaries.
    All variance parameters are floored at ``VAR_FLOOR``.
    """
    M = len(beta)
    lam2 = np.maximum(state.lam2, VAR_FLOOR)
    tau2 = _inv_gamma(
        (M + 1) / 2.0,
        1.0 / state.aux_tau + 0.5 * np.sum(beta**2 / lam2),
        rng,
    )
    tau2 = max(tau2, VAR_FLOOR)
    lam2 = _inv_gamma(1.0, 1.0 / state.aux_lam + beta**2 / (2.0 * tau2), rng, size=M)
    lam2 = np.maximum(lam2, VAR_FLOOR)
    aux_tau = max(_inv_gamma(1.0, 1.0 + 1.0 / tau2, rng), VAR_FLOOR)
    aux_lam = np.maximum(_inv_gamma(1.0, 1.0 + 1.0 / lam2, rng, size=M), VAR_FLOOR)
    return HorseshoeState(tau2=tau2, lam2=lam2, aux_tau=aux_tau, aux_lam=aux_lam, beta=beta.copy())
