"""Error-variance models: inverse-Gamma homoskedastic and log-AR(1) SV.

The stochastic-volatility block treats the log squared residuals as a
linear Gaussian state-space model by approximating the log chi-squared(1)
observation error with the tabulated ten-component Gaussian mixture of
Omori, Chib, Shephard, and Nakajima (2007).  One sweep draws the mixture
indicators, the latent log-variance path by forward filtering and backward
sampling, and then the level, persistence, and innovation variance of the
state equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta as beta_dist
from scipy.stats import geninvgauss

# ten-component mixture approximation to log chi^2(1)
MIXTURE_PROBS = np.array(
    [0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115]
)
MIXTURE_MEANS = np.array(
    [1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65000]
)
MIXTURE_VARS = np.array(
    [0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342]
)

LOG_OFFSET = 1e-6  # guards log(eps^2) against exact zeros


def sample_homoskedastic_variance(
    residuals: np.ndarray, a0: float, b0: float, rng: np.random.Generator
) -> float:
    """Draw sigma^2 from its inverse-Gamma posterior IG(a0 + T/2, b0 + SS/2)."""
    residuals = np.asarray(residuals, dtype=float)
    shape = a0 + 0.5 * len(residuals)
    scale = b0 + 0.5 * float(residuals @ residuals)
    return scale / rng.gamma(shape, 1.0)


@dataclass
class SvPriors:
    """Priors for the log-variance state equation.

    level ~ N(mu_mean, mu_var); (phi+1)/2 ~ Beta(phi_a, phi_b);
    sigma_eta^2 ~ Gamma(shape sigma_shape, rate sigma_rate).
    """

    mu_mean: float = 0.0
    mu_var: float = 10.0
    phi_a: float = 5.0
    phi_b: float = 1.5
    sigma_shape: float = 0.5
    sigma_rate: float = 0.5
    phi_step: float = 0.15


@dataclass
class SvState:
    logvol: np.ndarray
    mu: float
    phi: float
    sigma_eta: float
    indicators: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @classmethod
    def initial(cls, n: int) -> "SvState":
        return cls(logvol=np.zeros(n), mu=0.0, phi=0.9, sigma_eta=0.2)

    def variances(self) -> np.ndarray:
        return np.exp(self.logvol)


def draw_mixture_indicators(
    ystar: np.ndarray, logvol: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Sample the mixture component of each period's observation error."""
    resid = ystar[:, None] - logvol[:, None] - MIXTURE_MEANS[None, :]
    logp = (
        np.log(MIXTURE_PROBS)[None, :]
        - 0.5 * np.log(MIXTURE_VARS)[None, :]
        - 0.5 * resid**2 / MIXTURE_VARS[None, :]
    )
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    p /= p.sum(axis=1, keepdims=True)
    u = rng.uniform(size=len(ystar))
    return (u[:, None] > np.cumsum(p, axis=1)).sum(axis=1)


def ffbs_logvol(
    ystar: np.ndarray,
    indicators: np.ndarray,
    mu: float,
    phi: float,
    sigma_eta: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Forward-filter backward-sample the log-variance path.

    Observation: ystar_t = logvol_t + m_{s_t} + N(0, v_{s_t});
    state: logvol_t = mu + phi (logvol_{t-1} - mu) + sigma_eta * N(0,1),
    with the stationary prior on the initial state.
    """
    T = len(ystar)
    obs = ystar - MIXTURE_MEANS[indicators]
    obs_var = MIXTURE_VARS[indicators]
    s2 = sigma_eta**2

    filt_mean = np.empty(T)
    filt_var = np.empty(T)
    pred_mean = np.empty(T)
    pred_var = np.empty(T)
    pred_mean[0] = mu
    pred_var[0] = s2 / (1.0 - phi**2) if abs(phi) < 1 and s2 > 0 else 0.0
    for t in range(T):
        if t > 0:
            pred_mean[t] = mu + phi * (filt_mean[t - 1] - mu)
            pred_var[t] = phi**2 * filt_var[t - 1] + s2
        gain = pred_var[t] / (pred_var[t] + obs_var[t])
        filt_mean[t] = pred_mean[t] + gain * (obs[t] - pred_mean[t])
        filt_var[t] = (1.0 - gain) * pred_var[t]

    path = np.empty(T)
    path[T - 1] = filt_mean[T - 1] + np.sqrt(max(filt_var[T - 1], 0.0)) * rng.standard_normal()
    for t in range(T - 2, -1, -1):
        if pred_var[t + 1] > 0:
            g = phi * filt_var[t] / pred_var[t + 1]
            mean = filt_mean[t] + g * (path[t + 1] - pred_mean[t + 1])
            var = filt_var[t] - g * phi * filt_var[t]
        else:
            mean, var = filt_mean[t], filt_var[t]
        path[t] = mean + np.sqrt(max(var, 0.0)) * rng.standard_normal()
    return path


def _loglik_path(path, mu, phi, sigma_eta):
    """State-equation log likelihood of the path, stationary initial state."""
    if abs(phi) >= 1 or sigma_eta <= 0:
        return -np.inf
    s2 = sigma_eta**2
    v0 = s2 / (1.0 - phi**2)
    innov = path[1:] - mu - phi * (path[:-1] - mu)
    return (
        -0.5 * np.log(v0)
        - 0.5 * (path[0] - mu) ** 2 / v0
        - 0.5 * (len(path) - 1) * np.log(s2)
        - 0.5 * float(innov @ innov) / s2
    )


def update_sv_params(
    path: np.ndarray,
    state: SvState,
    priors: SvPriors,
    rng: np.random.Generator,
) -> tuple[float, float, float, bool]:
    """Draw (mu, phi, sigma_eta) given the path; returns the phi-MH outcome."""
    phi, s2 = state.phi, state.sigma_eta**2
    T = len(path)

    # level: Gaussian conditional from the stationary initial state and transitions
    prec = (1.0 - phi**2) / s2 + (T - 1) * (1.0 - phi) ** 2 / s2 + 1.0 / priors.mu_var
    mean = (
        (1.0 - phi**2) * path[0] / s2
        + (1.0 - phi) * np.sum(path[1:] - phi * path[:-1]) / s2
        + priors.mu_mean / priors.mu_var
    ) / prec
    mu = float(mean + rng.standard_normal() / np.sqrt(prec))

    # persistence: random-walk MH under the transformed Beta prior
    phi_prop = phi + priors.phi_step * rng.standard_normal()
    accepted = False
    if abs(phi_prop) < 1.0:
        log_ratio = (
            beta_dist.logpdf((phi_prop + 1.0) / 2.0, priors.phi_a, priors.phi_b)
            - beta_dist.logpdf((phi + 1.0) / 2.0, priors.phi_a, priors.phi_b)
            + _loglik_path(path, mu, phi_prop, state.sigma_eta)
            - _loglik_path(path, mu, phi, state.sigma_eta)
        )
        if np.log(rng.uniform()) < log_ratio:
            phi = float(phi_prop)
            accepted = True

    # innovation variance: generalized inverse Gaussian conditional
    chi = (1.0 - phi**2) * (path[0] - mu) ** 2 + float(
        np.sum((path[1:] - mu - phi * (path[:-1] - mu)) ** 2)
    )
    chi = max(chi, 1e-12)
    psi = 2.0 * priors.sigma_rate
    p = priors.sigma_shape - 0.5 * T
    s2_new = float(
        geninvgauss.rvs(p, np.sqrt(chi * psi), scale=np.sqrt(chi / psi), random_state=rng)
    )
    return mu, phi, float(np.sqrt(s2_new)), accepted


def _interweave_level_scale(obs, obs_var, tilde, priors, rng):
    """Joint Gaussian draw of (level, signed scale) in the noncentered form.

    With the path written as logvol = mu + scale * tilde, the observation
    equation becomes a heteroskedastic linear regression in (mu, scale).
    The Gamma(1/2, rate) prior on scale^2 is exactly a mean-zero Gaussian on
    the signed scale with variance 1/(2 rate), so the draw is conjugate.
    """
    D = np.column_stack([np.ones_like(tilde), tilde])
    w = 1.0 / obs_var
    prior_prec = np.diag([1.0 / priors.mu_var, 2.0 * priors.sigma_rate])
    P = (D * w[:, None]).T @ D + prior_prec
    mean = np.linalg.solve(P, (D * w[:, None]).T @ obs + prior_prec @ np.array(
        [priors.mu_mean, 0.0]
    ))
    L = np.linalg.cholesky(np.linalg.inv(P))
    draw = mean + L @ rng.standard_normal(2)
    return float(draw[0]), float(draw[1])


def sample_sv(
    residuals: np.ndarray,
    state: SvState,
    priors: SvPriors,
    rng: np.random.Generator,
) -> SvState:
    """One full SV sweep: indicators, path, then state parameters.

    Parameters are first drawn in the centered parameterization, then
    redrawn after interweaving into the noncentered one (path rescaled to
    unit innovation variance); this keeps the level and scale well mixed
    when the volatility path is persistent with small innovations.
    """
    ystar = np.log(np.asarray(residuals, dtype=float) ** 2 + LOG_OFFSET)
    indicators = draw_mixture_indicators(ystar, state.logvol, rng)
    path = ffbs_logvol(ystar, indicators, state.mu, state.phi, state.sigma_eta, rng)
    mu, phi, sigma_eta, _ = update_sv_params(path, state, priors, rng)

    # ancillarity-sufficiency interweaving: rescale, redraw, map back
    tilde = (path - mu) / max(sigma_eta, 1e-8)
    obs = ystar - MIXTURE_MEANS[indicators]
    obs_var = MIXTURE_VARS[indicators]
    mu_star, scale_star = _interweave_level_scale(obs, obs_var, tilde, priors, rng)
    if scale_star < 0:  # the sign of the scale is not identified
        scale_star, tilde = -scale_star, -tilde
    phi_prop = phi + priors.phi_step * rng.standard_normal()
    if abs(phi_prop) < 1.0:
        log_ratio = (
            beta_dist.logpdf((phi_prop + 1.0) / 2.0, priors.phi_a, priors.phi_b)
            - beta_dist.logpdf((phi + 1.0) / 2.0, priors.phi_a, priors.phi_b)
            + _loglik_path(tilde, 0.0, phi_prop, 1.0)
            - _loglik_path(tilde, 0.0, phi, 1.0)
        )
        if np.log(rng.uniform()) < log_ratio:
            phi = float(phi_prop)
    mu, sigma_eta = mu_star, max(scale_star, 1e-10)
    path = mu + sigma_eta * tilde
    return SvState(logvol=path, mu=mu, phi=phi, sigma_eta=sigma_eta, indicators=indicators)


def propagate_logvol(state_mu, state_phi, state_sigma, last_logvol, rng) -> float:
    """One-step-ahead draw of the log variance from the state equation."""
    return float(
        state_mu + state_phi * (last_logvol - state_mu) + state_sigma * rng.standard_normal()
    )
