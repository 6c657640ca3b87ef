"""Gibbs orchestration across mean, variance, and hyperparameter blocks.

One chain owns one model configuration and one design.  Each iteration
first updates the hyperparameters (kernel scales for GP, shrinkage scales
for the linear mean, and the exponential-Almon weighting parameters when
that scheme is active, which rebuilds the compressed design), then the
conditional mean (GP function draw, BART backfitting sweep, or coefficient
draw), then the error-variance block.  The kernel and weighting moves
target the function-marginal posterior, so drawing the mean afterwards
makes every retained snapshot a coherent joint draw.  Draws after burn-in
are thinned; with the default 12000/3000/3 settings a chain keeps 3000.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np
from threadpoolctl import threadpool_limits

from . import bart as bart_mod
from . import blr as blr_mod
from . import gp as gp_mod
from . import volatility as vol_mod
from .basis import build_weight_matrix
from .pipeline import DesignMatrix, PredictionInput, Standardizer

MEAN_TYPES = ("blr", "gp", "bart")
VARIANCE_TYPES = ("hom", "sv")

XALM_PRIOR_SD = 0.1


class NumericalFailure(RuntimeError):
    """More than the tolerated share of iterations failed numerically."""


@dataclass
class ModelConfig:
    """Full model identity for one chain."""

    mean: str = "blr"
    variance: str = "hom"
    scheme: str = "br"
    degree: int = 3
    info_set: str | None = None
    n_target_lags: int = 4
    n_hf_lags: int = 12
    m: int = 3
    horizon: float = 0.0
    iters: int = 12000
    burn: int = 3000
    thin: int = 3
    seed: int = 0
    theta_init: tuple[float, float] = (0.0, 0.0)
    sigma_prior_shape: float = 0.01
    sigma_prior_scale: float = 0.01
    n_trees: int = 250

    def __post_init__(self):
        if self.mean not in MEAN_TYPES:
            raise ValueError(f"mean must be one of {MEAN_TYPES}")
        if self.variance not in VARIANCE_TYPES:
            raise ValueError(f"variance must be one of {VARIANCE_TYPES}")
        if self.burn >= self.iters:
            raise ValueError("burn must be smaller than iters")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")

    @property
    def n_retained(self) -> int:
        return (self.iters - self.burn) // self.thin

    def model_id(self) -> str:
        parts = [self.mean.upper(), self.variance, self.scheme]
        if self.info_set:
            parts.append(self.info_set)
        return "-".join(parts)

    def weight_matrix(self, theta=None):
        theta = theta if theta is not None else self.theta_init
        return build_weight_matrix(
            self.scheme,
            self.n_hf_lags,
            degree=self.degree,
            m=self.m,
            theta=theta if self.scheme == "xalm" else None,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta_init"] = list(self.theta_init)
        return d


def parse_model_id(model_id: str, **overrides) -> ModelConfig:
    """Build a config from an id like GP-hom-xalm, BLR-sv-leg5-m, BART-hom-u.

    Parts are mean-variance-scheme[-size]; a digit suffix on the scheme sets
    the polynomial degree (default 3).
    """
    parts = model_id.split("-")
    if len(parts) < 3:
        raise ValueError(f"malformed model id {model_id!r}; expected mean-variance-scheme")
    scheme_token = parts[2]
    scheme = scheme_token.rstrip("0123456789")
    degree = int(scheme_token[len(scheme):]) if len(scheme_token) > len(scheme) else 3
    kwargs = {
        "mean": parts[0].lower(),
        "variance": parts[1].lower(),
        "scheme": scheme,
        "degree": degree,
    }
    if len(parts) > 3:
        kwargs["info_set"] = parts[3]
    kwargs.update(overrides)
    return ModelConfig(**kwargs)


@dataclass
class PosteriorDraws:
    """Retained draws of everything the predictive step needs."""

    config: ModelConfig
    standardizer: Standardizer
    f: np.ndarray
    sigma2_path: np.ndarray
    f_test: np.ndarray | None = None
    beta: np.ndarray | None = None
    xi: np.ndarray | None = None
    lam: np.ndarray | None = None
    theta: np.ndarray | None = None
    sigma2: np.ndarray | None = None
    sv_mu: np.ndarray | None = None
    sv_phi: np.ndarray | None = None
    sv_sigma: np.ndarray | None = None
    logvol_last: np.ndarray | None = None
    accept_rates: dict = field(default_factory=dict)
    origin: tuple[int, float] | None = None

    @property
    def n_draws(self) -> int:
        return self.f.shape[0]


@dataclass
class PredictiveDistribution:
    """Predictive draws for one origin, in original target units."""

    values: np.ndarray
    origin: tuple[int, float] | None = None

    def quantile(self, tau) -> np.ndarray:
        return np.quantile(self.values, tau)

    def median(self) -> float:
        return float(np.median(self.values))


def mh_update_xalm(
    theta: tuple[float, float],
    step: float,
    rng: np.random.Generator,
    loglik_fn=None,
    prior_sd: float = XALM_PRIOR_SD,
) -> tuple[tuple[float, float], bool]:
    """Joint random-walk Metropolis step on the exponential-Almon parameters.

    ``loglik_fn(theta) -> float`` evaluates the active mean model's
    conditional (or marginal) log likelihood after rebuilding the weights;
    ``None`` targets the Gaussian prior alone.  Numerical failures reject.
    """
    z = rng.standard_normal(2)
    prop = (theta[0] + step * z[0], theta[1] + step * z[1])
    log_ratio = (prop[0] ** 2 + prop[1] ** 2 - theta[0] ** 2 - theta[1] ** 2) / (
        -2.0 * prior_sd**2
    )
    if loglik_fn is not None:
        try:
            cur_ll = loglik_fn(theta)
            prop_ll = loglik_fn(prop)
        except (gp_mod.FactorizationError, np.linalg.LinAlgError, ValueError):
            return theta, False
        if not np.isfinite(prop_ll):
            return theta, False
        log_ratio += prop_ll - cur_ll
    if np.log(rng.uniform()) < log_ratio:
        return prop, True
    return theta, False


class _Chain:
    """Mutable single-chain state; one instance per run_chain call."""

    def __init__(self, config: ModelConfig, design: DesignMatrix, rng, pred):
        self.config = config
        self.design = design
        self.rng = rng
        self.pred = pred
        self.y = design.y
        self.T = len(design.y)
        self.theta = tuple(config.theta_init)
        self.W = config.weight_matrix(self.theta)
        if self.W.n_lags != design.W.n_lags:
            raise ValueError("config lag order does not match the design")
        self.X = design.X if config.scheme != "xalm" else design.rebuild_x(self.W)
        self.x_test = design.rebuild_row(pred, self.W) if pred is not None else None
        self.failures = 0

        if config.variance == "hom":
            self.sigma2 = 1.0
            self.sv = None
        else:
            self.sv = vol_mod.SvState.initial(self.T)
            self.sv_priors = vol_mod.SvPriors()

        m = config.mean
        if m == "gp":
            s2 = gp_mod.ar1_residual_variance(self.y)
            self.kernel_priors = gp_mod.default_kernel_priors(s2)
            self.hyper = gp_mod.KernelHyper(xi=1.0, lam=self.kernel_priors.lam.mean)
            self.kernel_scale = gp_mod.AdaptiveScale(0.5)
            self._refresh_distances()
            self.f = np.zeros(self.T)
        elif m == "blr":
            self.hs = blr_mod.HorseshoeState.initial(self.X.shape[1])
            self.beta = np.zeros(self.X.shape[1])
            self.f = np.zeros(self.T)
        else:
            self.bart_data = bart_mod.BartData.from_design(self.X)
            bcfg = bart_mod.BartConfig(n_trees=config.n_trees)
            self.forest = bart_mod.Forest(
                self.bart_data, bcfg, float(self.y.max() - self.y.min())
            )
            self.f = np.zeros(self.T)
        if config.scheme == "xalm":
            self.theta_scale = gp_mod.AdaptiveScale(0.05)

    # -- helpers ---------------------------------------------------------
    def _refresh_distances(self):
        rows = self.X if self.x_test is None else np.vstack([self.X, self.x_test])
        self.sq_dists = gp_mod.squared_distances(rows)

    def sigma_diag(self) -> np.ndarray:
        if self.config.variance == "hom":
            return np.full(self.T, self.sigma2)
        return self.sv.variances()

    # -- blocks ----------------------------------------------------------
    def update_mean(self, Sigma):
        cfg = self.config
        if cfg.mean == "gp":
            K_full = gp_mod.gram_from_distances(self.sq_dists, self.hyper)
            K_train = K_full[: self.T, : self.T]
            try:
                moments = gp_mod.gp_conditional_moments(
                    K_train, K_full[:, : self.T], K_full, Sigma, self.y
                )
                draw = gp_mod.sample_function_values(moments, self.rng)
            except gp_mod.FactorizationError:
                self.failures += 1
                return
            self.f = draw[: self.T]
            self.f_test_value = draw[self.T] if self.x_test is not None else None
        elif cfg.mean == "blr":
            self.beta = blr_mod.sample_beta(self.X, self.y, Sigma, self.hs, self.rng)
            self.f = self.X @ self.beta
            if self.x_test is not None:
                self.f_test_value = float(self.x_test @ self.beta)
        else:
            self.f = self.forest.sweep(self.y, Sigma, self.rng)
            if self.x_test is not None:
                self.f_test_value = float(self.forest.predict(self.x_test[None, :])[0])

    def update_variance(self):
        resid = self.y - self.f
        if self.config.variance == "hom":
            self.sigma2 = vol_mod.sample_homoskedastic_variance(
                resid, self.config.sigma_prior_shape, self.config.sigma_prior_scale, self.rng
            )
        else:
            self.sv = vol_mod.sample_sv(resid, self.sv, self.sv_priors, self.rng)

    def update_hyper(self):
        cfg = self.config
        Sigma = self.sigma_diag()
        if cfg.mean == "gp":
            step = self.kernel_scale.scale
            self.hyper, accepted = gp_mod.mh_update_kernel_hyper(
                self.hyper,
                self.sq_dists[: self.T, : self.T],
                self.y,
                Sigma,
                self.kernel_priors,
                (step, step),
                self.rng,
            )
            self.kernel_scale.update(accepted)
            self._acc["kernel"].append(accepted)
        elif cfg.mean == "blr":
            self.hs = blr_mod.update_horseshoe(self.hs, self.beta, self.rng)
        if cfg.scheme == "xalm":
            self._update_theta(Sigma)

    def _xalm_loglik(self, Sigma):
        cfg = self.config

        def loglik(theta):
            W = cfg.weight_matrix(theta)
            X = self.design.rebuild_x(W)
            if cfg.mean == "gp":
                D = gp_mod.squared_distances(X)
                K = gp_mod.gram_from_distances(D, self.hyper)
                return gp_mod.gp_log_marginal(self.y, K, Sigma)
            if cfg.mean == "blr":
                resid = self.y - X @ self.beta
            else:
                resid = self.y - self.forest.predict(X)
            return -0.5 * float(np.sum(resid**2 / Sigma))

        return loglik

    def _update_theta(self, Sigma):
        self.theta, accepted = mh_update_xalm(
            self.theta, self.theta_scale.scale, self.rng, self._xalm_loglik(Sigma)
        )
        self.theta_scale.update(accepted)
        self._acc["theta"].append(accepted)
        if accepted:
            self.W = self.config.weight_matrix(self.theta)
            self.X = self.design.rebuild_x(self.W)
            if self.pred is not None:
                self.x_test = self.design.rebuild_row(self.pred, self.W)
            if self.config.mean == "gp":
                self._refresh_distances()
            elif self.config.mean == "bart":
                self.bart_data.X = self.X
                self.forest.refresh_fits()

    # -- main loop -------------------------------------------------------
    def run(self) -> PosteriorDraws:
        cfg = self.config
        n_ret = cfg.n_retained
        self._acc = {"kernel": [], "theta": []}
        self.f_test_value = None

        out_f = np.empty((n_ret, self.T))
        out_sig = np.empty((n_ret, self.T))
        out_ftest = np.empty(n_ret) if self.pred is not None else None
        out_beta = np.empty((n_ret, self.X.shape[1])) if cfg.mean == "blr" else None
        out_xi = np.empty(n_ret) if cfg.mean == "gp" else None
        out_lam = np.empty(n_ret) if cfg.mean == "gp" else None
        out_theta = np.empty((n_ret, 2)) if cfg.scheme == "xalm" else None
        out_s2 = np.empty(n_ret) if cfg.variance == "hom" else None
        out_svmu = np.empty(n_ret) if cfg.variance == "sv" else None
        out_svphi = np.empty(n_ret) if cfg.variance == "sv" else None
        out_svsig = np.empty(n_ret) if cfg.variance == "sv" else None
        out_lvlast = np.empty(n_ret) if cfg.variance == "sv" else None

        j = 0
        for i in range(1, cfg.iters + 1):
            if i == cfg.burn + 1:
                if cfg.mean == "gp":
                    self.kernel_scale.freeze()
                if cfg.scheme == "xalm":
                    self.theta_scale.freeze()
            # hyperparameters first: the kernel and weighting updates target
            # the function-marginal posterior, so the mean block redraws the
            # function values under the new hyperparameters before recording
            self.update_hyper()
            self.update_mean(self.sigma_diag())
            self.update_variance()

            if i > cfg.burn and (i - cfg.burn) % cfg.thin == 0 and j < n_ret:
                out_f[j] = self.f
                out_sig[j] = self.sigma_diag()
                if out_ftest is not None:
                    out_ftest[j] = self.f_test_value
                if out_beta is not None:
                    out_beta[j] = self.beta
                if out_xi is not None:
                    out_xi[j] = self.hyper.xi
                    out_lam[j] = self.hyper.lam
                if out_theta is not None:
                    out_theta[j] = self.theta
                if out_s2 is not None:
                    out_s2[j] = self.sigma2
                if out_svmu is not None:
                    out_svmu[j] = self.sv.mu
                    out_svphi[j] = self.sv.phi
                    out_svsig[j] = self.sv.sigma_eta
                    out_lvlast[j] = self.sv.logvol[-1]
                j += 1

        if self.failures > 0.01 * cfg.iters:
            raise NumericalFailure(
                f"{self.failures} of {cfg.iters} iterations failed numerically "
                f"(model {cfg.model_id()})"
            )

        rates = {
            name: float(np.mean(v)) for name, v in self._acc.items() if len(v) > 0
        }
        return PosteriorDraws(
            config=cfg,
            standardizer=self.design.standardizer,
            f=out_f,
            sigma2_path=out_sig,
            f_test=out_ftest,
            beta=out_beta,
            xi=out_xi,
            lam=out_lam,
            theta=out_theta,
            sigma2=out_s2,
            sv_mu=out_svmu,
            sv_phi=out_svphi,
            sv_sigma=out_svsig,
            logvol_last=out_lvlast,
            accept_rates=rates,
            origin=(self.pred.t, self.pred.h) if self.pred is not None else None,
        )


def run_chain(
    config: ModelConfig,
    design: DesignMatrix,
    rng: np.random.Generator | None = None,
    pred: PredictionInput | None = None,
) -> PosteriorDraws:
    """Run one MCMC chain; deterministic given the seed (or supplied rng)."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    # chains work with small matrices; threaded BLAS only adds overhead
    with threadpool_limits(limits=1):
        return _Chain(config, design, rng, pred).run()


def draw_predictive(
    draws: PosteriorDraws,
    config: ModelConfig | None = None,
    rng: np.random.Generator | None = None,
) -> PredictiveDistribution:
    """Predictive draws in original units from retained posterior draws.

    Per retained draw the stored mean-function value at the test input is
    combined with a noise draw (homoskedastic variance, or the one-step
    propagation of the log-volatility state), then destandardized.
    """
    config = config or draws.config
    if draws.f_test is None:
        raise ValueError("chain was run without a prediction input")
    if rng is None:
        rng = np.random.default_rng(config.seed + 1)
    n = draws.n_draws
    if config.variance == "hom":
        noise_var = draws.sigma2
    else:
        next_logvol = np.array(
            [
                vol_mod.propagate_logvol(
                    draws.sv_mu[i], draws.sv_phi[i], draws.sv_sigma[i], draws.logvol_last[i], rng
                )
                for i in range(n)
            ]
        )
        noise_var = np.exp(next_logvol)
    std_draws = draws.f_test + np.sqrt(noise_var) * rng.standard_normal(n)
    values = draws.standardizer.destandardize_y(std_draws)
    return PredictiveDistribution(values=values, origin=draws.origin)


def inefficiency_factor(x: np.ndarray, max_lag: int | None = None) -> float:
    """1 + 2 * sum of autocorrelations, truncated at the first nonpositive lag."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 10 or np.var(x) == 0:
        return 1.0
    if max_lag is None:
        max_lag = min(200, n // 5)
    xc = x - x.mean()
    denom = float(xc @ xc)
    total = 1.0
    for k in range(1, max_lag + 1):
        rho = float(xc[k:] @ xc[:-k]) / denom
        if rho <= 0:
            break
        total += 2.0 * rho
    return total
