"""Forecast scoring and comparison: quantile scores, weighted CRPS, the
Diebold-Mariano test, the model confidence set, subsample masks, and the
exploratory dummy regression of log losses on model features.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import norm, t as t_dist

TAU_GRID = np.round(np.arange(0.05, 0.9501, 0.01), 2)

CRPS_WEIGHTINGS = ("equal", "L", "R")

SIGNIFICANCE_TIERS = (0.05, 0.01, 0.001)


def quantile_score(y: float, yhat_tau: float, tau: float) -> float:
    """Pinball loss 2 (y - yhat)(tau - 1{y <= yhat}); tau=0.5 gives |y - yhat|."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must be inside (0, 1)")
    return 2.0 * (y - yhat_tau) * (tau - float(y <= yhat_tau))


def crps_weights(weighting: str, taus: np.ndarray = TAU_GRID) -> np.ndarray:
    if weighting == "equal":
        return np.ones_like(taus)
    if weighting == "L":
        return (1.0 - taus) ** 2
    if weighting == "R":
        return taus**2
    raise ValueError(f"weighting must be one of {CRPS_WEIGHTINGS}")


def weighted_crps(draws: np.ndarray, y: float, weighting: str = "equal") -> float:
    """Quantile-weighted CRPS on the 91-point tau grid.

    Empirical quantiles of the predictive draws enter the pinball loss at
    each grid point; the score is the weighted-term mean over the grid.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.size < 2:
        raise ValueError("need at least two predictive draws")
    q = np.quantile(draws, TAU_GRID)
    scores = 2.0 * (y - q) * (TAU_GRID - (y <= q))
    return float(np.mean(crps_weights(weighting) * scores))


def crps_from_quantiles(quantiles: np.ndarray, y: float, weighting: str = "equal") -> float:
    """Same grid sum evaluated from externally supplied grid quantiles."""
    quantiles = np.asarray(quantiles, dtype=float)
    if quantiles.shape != TAU_GRID.shape:
        raise ValueError("quantiles must match the tau grid")
    scores = 2.0 * (y - quantiles) * (TAU_GRID - (y <= quantiles))
    return float(np.mean(crps_weights(weighting) * scores))


def score_prediction(draws: np.ndarray, y: float) -> dict[str, float]:
    """All per-origin metrics for one predictive distribution."""
    out = {
        "mae": abs(float(np.quantile(draws, 0.5)) - y),
        "crps": weighted_crps(draws, y, "equal"),
        "crps_l": weighted_crps(draws, y, "L"),
        "crps_r": weighted_crps(draws, y, "R"),
    }
    q = np.quantile(draws, TAU_GRID)
    for tau, qv in zip(TAU_GRID, q):
        out[f"qs_{tau:.2f}"] = quantile_score(y, float(qv), float(tau))
    return out


# ---------------------------------------------------------------------------
# Diebold-Mariano


def _dm_truncation(h: float) -> int:
    """HAC truncation lag: forecast steps minus one in low-frequency units."""
    return max(0, int(np.floor(h)))


def dm_test(loss_a: np.ndarray, loss_b: np.ndarray, h: float = 0.0) -> tuple[float, float]:
    """Diebold-Mariano statistic and two-sided p-value for equal accuracy.

    The loss differential's long-run variance uses a rectangular HAC sum
    truncated by horizon, falling back to the lag-0 variance if the
    truncated sum is nonpositive.  A zero-variance differential returns
    (0, 1): no evidence against equal accuracy.
    """
    a = np.asarray(loss_a, dtype=float)
    b = np.asarray(loss_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("loss series must be aligned and equal length")
    n = len(a)
    if n < 10:
        raise ValueError("need at least 10 aligned losses")
    d = a - b
    dbar = d.mean()
    dc = d - dbar
    gamma0 = float(dc @ dc) / n
    if gamma0 <= 0:
        return 0.0, 1.0
    lrv = gamma0
    for k in range(1, _dm_truncation(h) + 1):
        lrv += 2.0 * float(dc[k:] @ dc[:-k]) / n
    if lrv <= 0:
        lrv = gamma0
    stat = dbar / np.sqrt(lrv / n)
    pvalue = 2.0 * (1.0 - norm.cdf(abs(stat)))
    return float(stat), float(pvalue)


def significance_tier(pvalue: float) -> int:
    """0 for none, then 1/2/3 for the 5, 1, and 0.1 percent levels."""
    tier = 0
    for level in SIGNIFICANCE_TIERS:
        if pvalue < level:
            tier += 1
    return tier


# ---------------------------------------------------------------------------
# Model confidence set


@dataclass
class McsResult:
    included: list
    eliminated: list  # (model, pvalue) in elimination order
    pvalues: dict

    def contains(self, model) -> bool:
        return model in self.included


def _block_bootstrap_indices(n, n_boot, block_length, rng):
    n_blocks = int(np.ceil(n / block_length))
    starts = rng.integers(0, n, size=(n_boot, n_blocks))
    offsets = np.arange(block_length)
    idx = (starts[:, :, None] + offsets[None, None, :]) % n
    return idx.reshape(n_boot, -1)[:, :n]

def model_confidence_set(
    losses: np.ndarray,
    model_ids: list | None = None,
    alpha: float = 0.10,
    n_boot: int = 5000,
    block_length: int = 4,
    rng: np.random.Generator | None = None,
) -> McsResult:
    """Iterated elimination with the range statistic over pairwise t ratios.

    ``losses`` is T x J.  A moving-block bootstrap of the column means
    yields both the variances of the pairwise mean differentials and the
    null distribution of the range statistic; the worst model is dropped
    until the test no longer rejects at level ``alpha``.  Reported p-values
    are monotonized over elimination steps.  Degenerate pairs (zero
    bootstrap variance) are treated as infinitely separated when their mean
    losses differ and as identical otherwise.
    """
    L = np.asarray(losses, dtype=float)
    T, J = L.shape
    if model_ids is None:
        model_ids = list(range(J))
    if J < 2:
        raise ValueError("need at least two models")
    rng = rng if rng is not None else np.random.default_rng(0)

    idx = _block_bootstrap_indices(T, n_boot, block_length, rng)
    boot_means = L[idx].mean(axis=1)  # n_boot x J
    col_means = L.mean(axis=0)

    active = list(range(J))
    eliminated: list[tuple] = []
    pvalues: dict = {}
    running_p = 0.0
    while len(active) > 1:
        sub = np.array(active)
        dbar = col_means[sub][:, None] - col_means[sub][None, :]
        boot_d = boot_means[:, sub][:, :, None] - boot_means[:, sub][:, None, :]
        var_d = np.mean((boot_d - dbar[None, :, :]) ** 2, axis=0)
        sd = np.sqrt(var_d)
        with np.errstate(divide="ignore", invalid="ignore"):
            tstat = dbar / sd
            tboot = (boot_d - dbar[None, :, :]) / sd[None, :, :]
        degenerate = sd == 0.0
        tstat[degenerate] = np.where(np.abs(dbar[degenerate]) > 0, np.inf, 0.0)
        tboot[:, degenerate] = 0.0
        t_range = np.nanmax(np.abs(tstat))
        boot_range = np.nanmax(np.abs(tboot), axis=(1, 2))
        pvalue = float(np.mean(boot_range >= t_range)) if np.isfinite(t_range) else 0.0
        running_p = max(running_p, pvalue)
        if pvalue >= alpha:
            for pos in active:
                pvalues[model_ids[pos]] = max(running_p, pvalue)
            break
        worst_local = int(np.argmax(np.max(np.where(np.isnan(tstat), -np.inf, tstat), axis=1)))
        worst = active[worst_local]
        pvalues[model_ids[worst]] = running_p
        eliminated.append((model_ids[worst], running_p))
        active.remove(worst)
    else:
        pvalues[model_ids[active[0]]] = 1.0
    included = [model_ids[i] for i in active]
    return McsResult(included=included, eliminated=eliminated, pvalues=pvalues)


# ---------------------------------------------------------------------------
# Subsamples


def parse_quarter(label) -> pd.Period:
    """Accept '1990Q1' style labels or ISO dates."""
    try:
        return pd.Period(label, freq="Q")
    except Exception as exc:  # pragma: no cover - pandas raises various types
        raise ValueError(f"cannot parse quarter label {label!r}") from exc


def load_recession_calendar(path) -> list[tuple[pd.Timestamp, pd.Timestamp]]:
    """CSV with 'start' and 'end' date columns, one row per recession."""
    df = pd.read_csv(path)
    for col in ("start", "end"):
        if col not in df.columns:
            raise ValueError(f"recession calendar is missing the {col!r} column")
    return [
        (pd.Timestamp(s), pd.Timestamp(e)) for s, e in zip(df["start"], df["end"])
    ]


def subsample_masks(
    dates,
    recessions: list[tuple[pd.Timestamp, pd.Timestamp]] | None = None,
    covid_split: str = "2019Q4",
) -> dict[str, np.ndarray]:
    """Boolean masks for Full / PreCovid / PostCovid / Recession / Expansion.

    The Covid split keeps the split quarter itself in the pre period.  A
    quarter counts as recessionary when it overlaps any calendar interval;
    without a calendar everything is Expansion (with a warning).
    """
    periods = [parse_quarter(d) for d in dates]
    split = parse_quarter(covid_split)
    pre = np.array([p <= split for p in periods])
    masks = {
        "Full": np.ones(len(periods), dtype=bool),
        "PreCovid": pre,
        "PostCovid": ~pre,
    }
    rec = np.zeros(len(periods), dtype=bool)
    if recessions is None:
        warnings.warn("no recession calendar supplied; all dates treated as Expansion")
    else:
        for i, p in enumerate(periods):
            q_start, q_end = p.start_time, p.end_time
            rec[i] = any(s <= q_end and e >= q_start for s, e in recessions)
    masks["Recession"] = rec
    masks["Expansion"] = ~rec
    return masks


# ---------------------------------------------------------------------------
# Dummy regression


def dummy_regression(
    log_losses: np.ndarray,
    features: pd.DataFrame,
    baselines: dict[str, str] | None = None,
) -> pd.DataFrame:
    """OLS of log losses on model-feature dummies, coefficients times 100.

    One dummy per non-baseline category of each feature column;
    heteroskedasticity-robust standard errors and significance tiers at the
    5 / 1 / 0.1 percent levels.
    """
    y = np.asarray(log_losses, dtype=float)
    if baselines is None:
        baselines = {}
    cols, names = [np.ones(len(y))], ["const"]
    for feat in features.columns:
        values = features[feat].astype(str)
        cats = sorted(values.unique())
        base = baselines.get(feat, cats[0])
        if base not in cats:
            raise ValueError(f"baseline {base!r} not a category of {feat!r}")
        for cat in cats:
            if cat == base:
                continue
            cols.append((values == cat).to_numpy(dtype=float))
            names.append(f"{feat}:{cat}")
    X = np.column_stack(cols)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("dummy design is rank deficient")
    XtX_inv = np.linalg.inv(X.T @ X)
    coef = XtX_inv @ (X.T @ y)
    resid = y - X @ coef
    n, k = X.shape
    meat = (X * resid[:, None] ** 2).T @ X
    cov = XtX_inv @ meat @ XtX_inv * (n / max(n - k, 1))
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstats = np.where(se > 0, coef / se, 0.0)
    pvals = 2.0 * (1.0 - t_dist.cdf(np.abs(tstats), df=max(n - k, 1)))
    out = pd.DataFrame(
        {
            "term": names,
            "coef_x100": 100.0 * coef,
            "se_x100": 100.0 * se,
            "tstat": tstats,
            "pvalue": pvals,
            "tier": [significance_tier(p) for p in pvals],
        }
    )
    return out[out["term"] != "const"].reset_index(drop=True)


# ---------------------------------------------------------------------------
# Loss tables

LOSS_TABLE_COLUMNS = ("model", "origin", "h", "subsample", "metric", "value")


def build_loss_table(
    predictions: pd.DataFrame,
    recessions=None,
) -> pd.DataFrame:
    """Per-origin losses in long format from a draw-level predictions frame.

    ``predictions`` needs columns model, origin, h, draw, value, realized.
    """
    required = {"model", "origin", "h", "draw", "value", "realized"}
    missing = required - set(predictions.columns)
    if missing:
        raise ValueError(f"predictions frame is missing columns: {sorted(missing)}")
    rows = []
    grouped = predictions.groupby(["model", "origin", "h"], sort=True)
    origin_info = {}
    for (model, origin, h), g in grouped:
        y = float(g["realized"].iloc[0])
        metrics = score_prediction(g["value"].to_numpy(), y)
        origin_info.setdefault(origin, None)
        for metric, value in metrics.items():
            rows.append((model, origin, h, metric, value))
    base = pd.DataFrame(rows, columns=["model", "origin", "h", "metric", "value"])

    origins = sorted(origin_info)
    masks = subsample_masks(origins, recessions)
    tables = []
    for name, mask in masks.items():
        keep = {o for o, m in zip(origins, mask) if m}
        sub = base[base["origin"].isin(keep)].copy()
        sub["subsample"] = name
        tables.append(sub)
    out = pd.concat(tables, ignore_index=True)
    return out[list(LOSS_TABLE_COLUMNS)]
