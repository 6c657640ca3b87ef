"""Squared-exponential Gaussian-process conditional mean.

Covariance between function values at inputs x and x' is
xi * exp(-0.5 * lam * ||x - x'||^2) with signal variance xi and a common
inverse length scale lam.  Posterior moments, function draws, the marginal
likelihood of the observations, and a random-walk Metropolis update for
(xi, lam) all operate through Cholesky factorizations with an escalating
jitter ladder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist
from scipy.special import gammaln

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class FactorizationError(RuntimeError):
    """Cholesky failed at every jitter level."""


@dataclass(frozen=True)
class KernelHyper:
    xi: float
    lam: float

    def __post_init__(self):
        if self.xi <= 0 or self.lam <= 0:
            raise ValueError("kernel hyperparameters must be strictly positive")


@dataclass
class GpPosterior:
    mean: np.ndarray
    cov: np.ndarray
    cholesky_jitter_used: float = 0.0


@dataclass(frozen=True)
class GammaPrior:
    """Gamma prior parameterized by shape and mean (rate = shape / mean)."""

    shape: float
    mean: float

    @property
    def rate(self) -> float:
        return self.shape / self.mean

    def logpdf(self, x: float) -> float:
        if x <= 0:
            return -np.inf
        a, r = self.shape, self.rate
        return a * np.log(r) - gammaln(a) + (a - 1.0) * np.log(x) - r * x


@dataclass(frozen=True)
class KernelPriors:
    xi: GammaPrior
    lam: GammaPrior


def default_kernel_priors(s2_ar1: float) -> KernelPriors:
    """Priors on (xi, lam) keyed to the target's AR(1) residual variance.

    The signal-variance prior is vague around one (the target is
    standardized); the inverse-length-scale prior mean is 0.1 * s2_ar1,
    shrinking toward smoother functions when the target is persistent.
    """
    return KernelPriors(xi=GammaPrior(0.5, 1.0), lam=GammaPrior(0.5, 0.1 * s2_ar1))


def ar1_residual_variance(y: np.ndarray) -> float:
    """Residual variance of a least-squares AR(1) with intercept, clamped to (0, 1]."""
    y = np.asarray(y, dtype=float)
    if len(y) < 3:
        return 1.0
    X = np.column_stack([np.ones(len(y) - 1), y[:-1]])
    coef, *_ = np.linalg.lstsq(X, y[1:], rcond=None)
    resid = y[1:] - X @ coef
    s2 = float(np.mean(resid**2))
    return min(1.0, max(s2, 1e-4))


def squared_distances(A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """Pairwise squared Euclidean distances, exact zero diagonal when B is A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if B is None:
        D = cdist(A, A, "sqeuclidean")
        np.fill_diagonal(D, 0.0)
        return D
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"input dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return cdist(A, B, "sqeuclidean")


def gram_from_distances(D: np.ndarray, hyper: KernelHyper) -> np.ndarray:
    return hyper.xi * np.exp(-0.5 * hyper.lam * D)


def se_kernel_gram(A: np.ndarray, B: np.ndarray | None, hyper: KernelHyper) -> np.ndarray:
    """Squared-exponential Gram matrix between rows of A and B (B=None means A)."""
    return gram_from_distances(squared_distances(A, B), hyper)


def se_kernel_gram_metric(
    A: np.ndarray, B: np.ndarray | None, xi: float, metric: np.ndarray
) -> np.ndarray:
    """Gram matrix with a general PSD quadratic-form metric in the exponent."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    AM = A @ metric
    sq = (
        np.einsum("ij,ij->i", AM, A)[:, None]
        + np.einsum("ij,ij->i", B @ metric, B)[None, :]
        - 2.0 * AM @ B.T
    )
    return xi * np.exp(-0.5 * np.maximum(sq, 0.0))


def jittered_cho_factor(S: np.ndarray):
    """Cholesky of a symmetric matrix, escalating the diagonal jitter ladder.

    Returns (cho_factor result, jitter used).  Raises FactorizationError if
    the largest jitter still fails.
    """
    scale = max(float(np.max(np.abs(np.diag(S)))), 1.0)
    for jitter in JITTER_LADDER:
        try:
            cf = cho_factor(S + jitter * scale * np.eye(S.shape[0]), lower=True)
            return cf, jitter * scale
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError("Cholesky failed after maximum jitter")


def gp_conditional_moments(
    K_train: np.ndarray,
    K_cross: np.ndarray,
    K_test: np.ndarray,
    Sigma: np.ndarray,
    y: np.ndarray,
) -> GpPosterior:
    """Gaussian conditional moments of test function values given y.

    ``Sigma`` is the diagonal of the observation noise covariance.
    ``K_cross`` is (n_test x n_train).
    """
    S = K_train + np.diag(np.asarray(Sigma, dtype=float))
    cf, jitter = jittered_cho_factor(S)
    alpha = cho_solve(cf, y)
    mean = K_cross @ alpha
    V = cho_solve(cf, K_cross.T)
    cov = K_test - K_cross @ V
    cov = (cov + cov.T) / 2.0
    return GpPosterior(mean=mean, cov=cov, cholesky_jitter_used=jitter)


def sample_function_values(moments: GpPosterior, rng: np.random.Generator) -> np.ndarray:
    """One draw from N(mean, cov); exact mean when cov is identically zero."""
    if np.max(np.abs(moments.cov)) == 0.0:
        return moments.mean.copy()
    cf, _ = jittered_cho_factor(moments.cov)
    L = np.tril(cf[0])
    return moments.mean + L @ rng.standard_normal(len(moments.mean))


def gp_log_marginal(y: np.ndarray, K_train: np.ndarray, Sigma: np.ndarray) -> float:
    """Log density of y under N(0, K_train + diag(Sigma))."""
    S = K_train + np.diag(np.asarray(Sigma, dtype=float))
    cf, _ = jittered_cho_factor(S)
    alpha = cho_solve(cf, y)
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    return float(-0.5 * (y @ alpha) - 0.5 * logdet - 0.5 * len(y) * np.log(2.0 * np.pi))


def _log_target(hyper, sq_dists, y, Sigma, priors):
    # log posterior of (log xi, log lam), including the change-of-variables term
    lp = (
        priors.xi.logpdf(hyper.xi)
        + priors.lam.logpdf(hyper.lam)
        + np.log(hyper.xi)
        + np.log(hyper.lam)
    )
    if y is not None:
        lp += gp_log_marginal(y, gram_from_distances(sq_dists, hyper), Sigma)
    return lp


def mh_update_kernel_hyper(
    current: KernelHyper,
    sq_dists: np.ndarray | None,
    y: np.ndarray | None,
    Sigma: np.ndarray | None,
    priors: KernelPriors,
    steps: tuple[float, float],
    rng: np.random.Generator,
) -> tuple[KernelHyper, bool]:
    """Joint random-walk Metropolis step on (log xi, log lam).

    Passing ``y=None`` targets the prior alone.  The proposal is rejected on
    any numerical failure of the marginal-likelihood evaluation.
    """
    z = rng.standard_normal(2)
    proposal = KernelHyper(
        xi=float(np.exp(np.log(current.xi) + steps[0] * z[0])),
        lam=float(np.exp(np.log(current.lam) + steps[1] * z[1])),
    )
    try:
        log_ratio = _log_target(proposal, sq_dists, y, Sigma, priors) - _log_target(
            current, sq_dists, y, Sigma, priors
        )
    except FactorizationError:
        return current, False
    if np.log(rng.uniform()) < log_ratio:
        return proposal, True
    return current, False


class AdaptiveScale:
    """Robbins-Monro style step-size adaptation toward a target acceptance rate.

    Call ``update(accepted)`` every iteration; scales freeze once ``freeze()``
    is invoked (end of burn-in).
    """

    def __init__(self, initial: float, target: float = 0.3, batch: int = 50):
        self.scale = float(initial)
        self.target = target
        self.batch = batch
        self._count = 0
        self._accepted = 0
        self._frozen = False

    def update(self, accepted: bool) -> None:
        if self._frozen:
            return
        self._count += 1
        self._accepted += bool(accepted)
        if self._count >= self.batch:
            rate = self._accepted / self._count
            if rate > self.target + 0.1:
                self.scale *= 1.25
            elif rate < self.target - 0.1:
                self.scale *= 0.8
            self._count = 0
            self._accepted = 0

    def freeze(self) -> None:
        self._frozen = True
