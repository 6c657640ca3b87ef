import numpy as np
import pytest
from scipy.stats import kstest

from bmidas.basis import build_weight_matrix
from bmidas.pipeline import MixedFrequencyPanel, Standardizer, assemble_design, prediction_input
from bmidas.sampler import (
    ModelConfig,
    PosteriorDraws,
    draw_predictive,
    inefficiency_factor,
    mh_update_xalm,
    parse_model_id,
    run_chain,
)


def make_panel(n_low=60, n_series=3, m=3, seed=0):
    rng = np.random.default_rng(seed)
    return MixedFrequencyPanel(
        y=rng.standard_normal(n_low),
        z=rng.standard_normal((m * n_low, n_series)),
        m=m,
    )


def small_cfg(**kw):
    base = dict(iters=400, burn=100, thin=2, seed=11)
    base.update(kw)
    return ModelConfig(**base)


def test_default_config_retains_3000():
    cfg = ModelConfig()
    assert (cfg.iters, cfg.burn, cfg.thin) == (12000, 3000, 3)
    assert cfg.n_retained == 3000
    assert cfg.n_target_lags == 4 and cfg.n_hf_lags == 12 and cfg.m == 3


def test_parse_model_id():
    cfg = parse_model_id("GP-sv-xalm-s")
    assert (cfg.mean, cfg.variance, cfg.scheme, cfg.info_set) == ("gp", "sv", "xalm", "s")
    cfg = parse_model_id("BLR-hom-leg5")
    assert cfg.scheme == "leg" and cfg.degree == 5
    with pytest.raises(ValueError, match="model id"):
        parse_model_id("GP")


def test_retained_count_in_run():
    panel = make_panel()
    cfg = small_cfg(mean="blr", scheme="br")
    design = assemble_design(panel, cfg.weight_matrix(), cfg.n_target_lags, 0.0)
    draws = run_chain(cfg, design)
    assert draws.n_draws == cfg.n_retained == 150
    assert np.all(np.isfinite(draws.f))


def test_blr_recovers_linear_dgp():
    rng = np.random.default_rng(1)
    T, M = 200, 5
    X = rng.standard_normal((T, M))
    beta_true = np.array([1.5, -2.0, 0.0, 0.8, -0.5])
    y = X @ beta_true + 0.5 * rng.standard_normal(T)

    # wrap as a design directly (no MIDAS compression involved)
    std = Standardizer.fit(X, y)
    from bmidas.pipeline import DesignMatrix

    W = build_weight_matrix("br", 12)
    design = DesignMatrix(
        X=std.transform_x(X),
        y=std.transform_y(y),
        y_lags_raw=np.empty((T, 0)),
        z_raw=X,
        standardizer=std,
        W=W,
        n_target_lags=0,
        n_series=M,
        horizon=0.0,
        m=3,
        t_index=np.arange(1, T + 1),
    )
    cfg = ModelConfig(mean="blr", variance="hom", scheme="br", iters=1500, burn=500, thin=2, seed=2)
    draws = run_chain(cfg, design)
    beta_std = beta_true * std.x_sd / std.y_sd  # coefficients in standardized units
    post_mean = draws.beta.mean(axis=0)
    post_sd = draws.beta.std(axis=0)
    assert np.all(np.abs(post_mean - beta_std) < 3.5 * post_sd + 1e-6)


def test_gp_fits_noiseless_linear_data():
    # target is an exact linear function of the compressed predictors (no
    # target lags), so the posterior-mean fit should be near-exact
    rng = np.random.default_rng(3)
    panel = make_panel(n_low=60, n_series=2, seed=3)
    W = build_weight_matrix("br", 12)
    d0 = assemble_design(panel, W, n_target_lags=0, h=0.0)
    compressed = d0.z_raw.reshape(len(d0.t_index), 2, 12).mean(axis=2)
    y_new = panel.y.copy()
    y_new[d0.t_index - 1] = compressed @ np.array([1.2, 0.9])
    panel2 = MixedFrequencyPanel(y=y_new, z=panel.z, m=3)
    design = assemble_design(panel2, W, n_target_lags=0, h=0.0)
    cfg = ModelConfig(
        mean="gp", variance="hom", scheme="br", n_target_lags=0,
        iters=1200, burn=400, thin=2, seed=4,
    )
    draws = run_chain(cfg, design)
    f_mean = draws.f.mean(axis=0)
    rmse = np.sqrt(np.mean((f_mean - design.y) ** 2))
    baseline = np.sqrt(np.mean(design.y**2))  # fitted mean of zero
    assert rmse < baseline / 10


def test_fixed_seed_bitwise_identical():
    panel = make_panel(n_low=40, n_series=2)
    cfg = small_cfg(mean="gp", variance="sv", scheme="xalm", iters=150, burn=50, thin=2)
    design = assemble_design(panel, cfg.weight_matrix(), cfg.n_target_lags, 0.0, t_end=39)
    pred = prediction_input(panel, cfg.n_target_lags, cfg.n_hf_lags, 0.0, 40)
    a = run_chain(cfg, design, pred=pred)
    b = run_chain(cfg, design, pred=pred)
    np.testing.assert_array_equal(a.f, b.f)
    np.testing.assert_array_equal(a.sigma2_path, b.sigma2_path)
    np.testing.assert_array_equal(a.f_test, b.f_test)
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.xi, b.xi)


def test_xalm_zero_step_accepts():
    rng = np.random.default_rng(0)
    theta = (0.05, -0.02)
    for _ in range(10):
        new, accepted = mh_update_xalm(theta, 0.0, rng, loglik_fn=None)
        assert accepted
        assert new == theta


def test_xalm_prior_only_marginals():
    rng = np.random.default_rng(5)
    theta = (0.0, 0.0)
    t1 = []
    for i in range(120000):
        theta, _ = mh_update_xalm(theta, 0.12, rng, loglik_fn=None)
        if i % 10 == 0:
            t1.append(theta[0])
    stat = kstest(np.array(t1), "norm", args=(0.0, 0.1)).statistic
    assert stat < 0.02, f"KS {stat:.4f}"


def test_predictive_point_mass_when_noise_free():
    std = Standardizer(x_mean=np.zeros(1), x_sd=np.ones(1), y_mean=2.0, y_sd=3.0)
    cfg = ModelConfig(mean="blr", variance="hom", iters=40, burn=10, thin=1, seed=0)
    n = 30
    f_test = np.linspace(-1, 1, n)
    draws = PosteriorDraws(
        config=cfg,
        standardizer=std,
        f=np.zeros((n, 4)),
        sigma2_path=np.zeros((n, 4)),
        f_test=f_test,
        sigma2=np.zeros(n),
    )
    dist = draw_predictive(draws, cfg, np.random.default_rng(1))
    np.testing.assert_allclose(dist.values, 2.0 + 3.0 * f_test, atol=1e-12)


def test_predictive_variance_decomposition():
    panel = make_panel(n_low=60, n_series=2, seed=6)
    cfg = ModelConfig(mean="blr", variance="hom", scheme="br", iters=4000, burn=500, thin=1, seed=7)
    design = assemble_design(panel, cfg.weight_matrix(), cfg.n_target_lags, 1.0, t_end=59)
    pred = prediction_input(panel, cfg.n_target_lags, cfg.n_hf_lags, 1.0, 60)
    draws = run_chain(cfg, design, pred=pred)
    dist = draw_predictive(draws, cfg, np.random.default_rng(8))
    s_y = design.standardizer.y_sd
    var_pred = np.var(dist.values) / s_y**2
    want = np.var(draws.f_test) + np.mean(draws.sigma2)
    assert abs(var_pred - want) / want < 0.15


def test_destandardize_affine_exact():
    std = Standardizer(x_mean=np.zeros(1), x_sd=np.ones(1), y_mean=-1.5, y_sd=0.7)
    d = np.array([0.0, 1.0, -2.0])
    np.testing.assert_array_equal(std.destandardize_y(d), -1.5 + 0.7 * d)


def test_ar_benchmark_is_blr_without_predictors():
    rng = np.random.default_rng(9)
    y = np.zeros(80)
    for t in range(1, 80):
        y[t] = 0.6 * y[t - 1] + rng.standard_normal()
    panel = MixedFrequencyPanel(y=y, z=np.empty((240, 0)), m=3)
    cfg = small_cfg(mean="blr", scheme="br", iters=600, burn=200, thin=2)
    design = assemble_design(panel, cfg.weight_matrix(), cfg.n_target_lags, 0.0, t_end=79)
    assert design.n_cols == 4
    pred = prediction_input(panel, 4, 12, 0.0, 80)
    draws = run_chain(cfg, design, pred=pred)
    dist = draw_predictive(draws, cfg, np.random.default_rng(10))
    assert np.isfinite(dist.values).all()
    # posterior mean of the first lag coefficient is near 0.6 in std units
    assert abs(draws.beta[:, 0].mean() - 0.6) < 0.2


def test_inefficiency_factors_on_small_dense_dgp():
    from bmidas.dgp import DgpSpec, simulate_dgp

    spec = DgpSpec(functional_form="NL", weights="fast", n_series=10, n_low=100)
    panel, _ = simulate_dgp(spec, np.random.default_rng(12))
    cfg = ModelConfig(mean="gp", variance="hom", scheme="br", iters=2400, burn=800, thin=1, seed=13)
    design = assemble_design(panel, cfg.weight_matrix(), cfg.n_target_lags, 0.0, t_end=spec.n_low)
    draws = run_chain(cfg, design)
    assert inefficiency_factor(draws.xi) < 100
    assert inefficiency_factor(draws.lam) < 100
    assert inefficiency_factor(draws.sigma2) < 100
    assert 0.1 < draws.accept_rates["kernel"] < 0.6


def test_numerical_failure_aborts_with_diagnostics(monkeypatch):
    import bmidas.gp as gp_mod
    from bmidas.sampler import NumericalFailure

    def always_fail(*args, **kwargs):
        raise gp_mod.FactorizationError("forced")

    monkeypatch.setattr("bmidas.sampler.gp_mod.gp_conditional_moments", always_fail)
    panel = make_panel(n_low=40, n_series=2)
    cfg = small_cfg(mean="gp", scheme="br", iters=120, burn=40, thin=2)
    design = assemble_design(panel, cfg.weight_matrix(), cfg.n_target_lags, 0.0)
    with pytest.raises(NumericalFailure, match="GP-hom-br"):
        run_chain(cfg, design)


def test_iid_series_inefficiency_near_one():
    rng = np.random.default_rng(0)
    assert inefficiency_factor(rng.standard_normal(5000)) < 1.5
