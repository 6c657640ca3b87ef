"""Data ingestion, stationarity transforms, and MIDAS design construction.

The design matrix for a low-frequency target y_t at horizon h stacks P_L
autoregressive lags of the target with K blocks of compressed high-frequency
lags.  Horizons are expressed in low-frequency units; h * m must be an
integer number of high-frequency periods.  Publication delays are embedded
in the lag indexing: the most recent usable observation of series k at
origin (t, h) is the one dated t - h - release_lag_k / m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .basis import MidasWeightMatrix, compress_lag_stack

TRANSFORM_CODES = tuple(range(1, 9))


def transform_series(x: np.ndarray, code: int, name: str = "series") -> np.ndarray:
    """Apply one of the eight stationarity transformation codes.

    1: none, 2: diff, 3: double diff, 4: log, 5: log diff, 6: double log
    diff, 7: diff of the gross growth rate minus one, 8: annualized growth
    100*((x_t/x_{t-1})^4 - 1).  Entries that need unavailable history are
    returned as NaN.
    """
    x = np.asarray(x, dtype=float)
    if code not in TRANSFORM_CODES:
        raise ValueError(f"unknown transform code {code} for {name!r}")
    if code in (4, 5, 6) and np.any(x <= 0):
        bad = int(np.argmax(x <= 0))
        raise ValueError(f"log transform (code {code}) on {name!r}: nonpositive value at row {bad}")

    def lag_diff(v, k=1):
        out = np.full_like(v, np.nan)
        out[k:] = v[k:] - v[:-k]
        return out

    if code == 1:
        return x.copy()
    if code == 2:
        return lag_diff(x)
    if code == 3:
        return lag_diff(lag_diff(x))
    if code == 4:
        return np.log(x)
    if code == 5:
        return lag_diff(np.log(x))
    if code == 6:
        return lag_diff(lag_diff(np.log(x)))
    if code == 7:
        ratio = np.full_like(x, np.nan)
        ratio[1:] = x[1:] / x[:-1] - 1.0
        return lag_diff(ratio)
    # code 8
    out = np.full_like(x, np.nan)
    out[1:] = 100.0 * ((x[1:] / x[:-1]) ** 4 - 1.0)
    return out


@dataclass
class MixedFrequencyPanel:
    """Low-frequency target plus an aligned high-frequency predictor panel.

    ``y`` has length T_L; ``z`` is (m * T_L) x K.  ``release_lag`` holds the
    per-series publication delay in high-frequency periods (default 1).
    """

    y: np.ndarray
    z: np.ndarray
    m: int
    names: list[str] = field(default_factory=list)
    release_lag: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim == 1:
            self.z = self.z[:, None]
        if self.z.size == 0:
            self.z = self.z.reshape(len(self.y) * self.m, 0)
        if self.z.shape[0] != self.m * len(self.y):
            raise ValueError(
                f"high-frequency length {self.z.shape[0]} != m*T_L = {self.m * len(self.y)}"
            )
        if not self.names:
            self.names = [f"z{k+1}" for k in range(self.z.shape[1])]
        if len(self.names) != self.z.shape[1]:
            raise ValueError("names length does not match number of predictors")
        if self.release_lag is None:
            self.release_lag = np.ones(self.z.shape[1], dtype=int)
        self.release_lag = np.asarray(self.release_lag, dtype=int)
        if np.any(self.release_lag < 0):
            raise ValueError("release lags must be nonnegative")

    @property
    def n_low(self) -> int:
        return len(self.y)

    @property
    def n_series(self) -> int:
        return self.z.shape[1]


def _horizon_steps(h: float, m: int) -> int:
    """Horizon in high-frequency periods; h*m must be a nonnegative integer."""
    steps = h * m
    if steps < 0 or abs(steps - round(steps)) > 1e-9:
        raise ValueError(f"horizon {h} is not a multiple of 1/{m}")
    return int(round(steps))


def build_hf_lag_vector(
    z_k: np.ndarray,
    t: int,
    h: float,
    n_lags: int,
    m: int,
    release_lag: int = 1,
) -> np.ndarray:
    """Most recent ``n_lags`` high-frequency values usable at origin (t, h).

    ``t`` is the 1-based low-frequency index of the target period and
    ``z_k`` the full high-frequency history (1-based period s stored at
    position s-1).  The first element is the newest usable observation,
    dated t - h - release_lag/m.
    """
    h_hf = _horizon_steps(h, m)
    newest = t * m - h_hf - release_lag  # 1-based HF index
    oldest = newest - n_lags + 1
    if oldest < 1:
        first_ok = int(math.ceil((n_lags + h_hf + release_lag) / m))
        raise ValueError(
            f"not enough high-frequency history at t={t}, h={h}; first feasible t is {first_ok}"
        )
    if newest > len(z_k):
        raise ValueError(f"high-frequency series too short at t={t}, h={h}")
    return z_k[newest - 1 :: -1][:n_lags].copy()


@dataclass
class Standardizer:
    """Column-wise affine map fitted on the training design."""

    x_mean: np.ndarray
    x_sd: np.ndarray
    y_mean: float
    y_sd: float

    @classmethod
    def fit(cls, X: np.ndarray, y: np.ndarray) -> "Standardizer":
        x_sd = X.std(axis=0, ddof=1) if X.shape[0] > 1 else np.ones(X.shape[1])
        x_sd = np.where(x_sd < 1e-12, 1.0, x_sd)
        y_sd = float(y.std(ddof=1)) if len(y) > 1 else 1.0
        if y_sd < 1e-12:
            y_sd = 1.0
        return cls(X.mean(axis=0), x_sd, float(y.mean()), y_sd)

    def transform_x(self, X: np.ndarray) -> np.ndarray:
        return (X - self.x_mean) / self.x_sd

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        return (y - self.y_mean) / self.y_sd

    def destandardize_y(self, y_std: np.ndarray) -> np.ndarray:
        return self.y_mean + self.y_sd * y_std


@dataclass
class PredictionInput:
    """Raw (unstandardized) regressor pieces for one prediction origin."""

    y_lags: np.ndarray
    z_lags: np.ndarray  # (K * n_lags,), per-series blocks most recent first
    t: int
    h: float


@dataclass
class DesignMatrix:
    """Standardized MIDAS design plus the raw blocks needed to rebuild it.

    ``X`` is the standardized (T_eff x M) design, columns ordered as P_L
    target lags followed by K compressed predictor blocks.  ``z_raw`` keeps
    the uncompressed lag stack so samplers that update the weighting
    parameters can recompress without touching the panel.
    """

    X: np.ndarray
    y: np.ndarray
    y_lags_raw: np.ndarray
    z_raw: np.ndarray
    standardizer: Standardizer
    W: MidasWeightMatrix
    n_target_lags: int
    n_series: int
    horizon: float
    m: int
    t_index: np.ndarray
    underdetermined: bool = False

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def n_cols(self) -> int:
        return self.X.shape[1]

    def rebuild_x(self, W: MidasWeightMatrix) -> np.ndarray:
        """Recompress the raw lag stack with ``W`` under the frozen affine map."""
        raw = np.hstack([self.y_lags_raw, compress_lag_stack(self.z_raw, W, self.n_series)])
        return self.standardizer.transform_x(raw)

    def rebuild_row(self, pred: PredictionInput, W: MidasWeightMatrix) -> np.ndarray:
        raw = np.concatenate(
            [pred.y_lags, compress_lag_stack(pred.z_lags[None, :], W, self.n_series)[0]]
        )
        return self.standardizer.transform_x(raw)


def _target_lags(y: np.ndarray, t: int, n_target_lags: int) -> np.ndarray:
    """Lags y_{t-1}, ..., y_{t-n_target_lags} for 1-based target index t."""
    if n_target_lags == 0:
        return np.empty(0)
    if t - 1 - n_target_lags < 0:
        raise ValueError(f"target lags unavailable for t={t}")
    stop = t - 2 - n_target_lags
    return y[t - 2 : (stop if stop >= 0 else None) : -1][:n_target_lags]


def _raw_blocks(panel, W, n_target_lags, h, t_values):
    n_lags = W.n_lags
    y_lag_rows = np.empty((len(t_values), n_target_lags))
    z_rows = np.empty((len(t_values), panel.n_series * n_lags))
    for i, t in enumerate(t_values):
        y_lag_rows[i] = _target_lags(panel.y, t, n_target_lags)
        for k in range(panel.n_series):
            z_rows[i, k * n_lags : (k + 1) * n_lags] = build_hf_lag_vector(
                panel.z[:, k], t, h, n_lags, panel.m, int(panel.release_lag[k])
            )
    return y_lag_rows, z_rows


def first_feasible_target(panel: MixedFrequencyPanel, n_target_lags: int, n_lags: int, h: float) -> int:
    """Smallest 1-based t for which all target and predictor lags exist."""
    h_hf = _horizon_steps(h, panel.m)
    t_min = n_target_lags + 1
    if panel.n_series:
        worst = int(panel.release_lag.max())
        t_min = max(t_min, math.ceil((n_lags + h_hf + worst) / panel.m))
    return t_min


def assemble_design(
    panel: MixedFrequencyPanel,
    W: MidasWeightMatrix,
    n_target_lags: int,
    h: float,
    t_end: int | None = None,
    standardizer: Standardizer | None = None,
) -> DesignMatrix:
    """Build the standardized design for targets t = t_min .. t_end.

    ``t_end`` defaults to the last observed target.  When ``standardizer``
    is omitted it is fitted on the rows being built (training window) and
    must be reused for any later (test) rows.
    """
    if t_end is None:
        t_end = panel.n_low
    if t_end > panel.n_low:
        raise ValueError("t_end beyond observed target sample")
    t_min = first_feasible_target(panel, n_target_lags, W.n_lags, h)
    t_values = np.arange(t_min, t_end + 1)
    if len(t_values) == 0 or len(t_values) <= n_target_lags:
        raise ValueError(
            f"effective sample of {len(t_values)} rows is too short for {n_target_lags} target lags"
        )

    y_lag_rows, z_rows = _raw_blocks(panel, W, n_target_lags, h, t_values)
    X_raw = np.hstack([y_lag_rows, compress_lag_stack(z_rows, W, panel.n_series)])
    y = panel.y[t_values - 1]
    if standardizer is None:
        standardizer = Standardizer.fit(X_raw, y)
    return DesignMatrix(
        X=standardizer.transform_x(X_raw),
        y=standardizer.transform_y(y),
        y_lags_raw=y_lag_rows,
        z_raw=z_rows,
        standardizer=standardizer,
        W=W,
        n_target_lags=n_target_lags,
        n_series=panel.n_series,
        horizon=h,
        m=panel.m,
        t_index=t_values,
        underdetermined=X_raw.shape[0] < X_raw.shape[1],
    )


def prediction_input(
    panel: MixedFrequencyPanel,
    n_target_lags: int,
    n_lags: int,
    h: float,
    t: int,
) -> PredictionInput:
    """Raw regressor pieces for predicting target period ``t`` at horizon h.

    ``t`` may be one step beyond the observed target sample as long as the
    required lags exist.
    """
    if t - 1 > panel.n_low:
        raise ValueError("prediction origin more than one period beyond the target sample")
    y_lags = _target_lags(panel.y, t, n_target_lags)
    z_lags = np.empty(panel.n_series * n_lags)
    for k in range(panel.n_series):
        z_lags[k * n_lags : (k + 1) * n_lags] = build_hf_lag_vector(
            panel.z[:, k], t, h, n_lags, panel.m, int(panel.release_lag[k])
        )
    return PredictionInput(y_lags=np.asarray(y_lags, dtype=float), z_lags=z_lags, t=t, h=h)


# ---------------------------------------------------------------------------
# CSV ingestion


@dataclass
class IngestedTable:
    """One transformed single-frequency table read from CSV."""

    dates: pd.DatetimeIndex
    values: np.ndarray
    names: list[str]
    frequency: str
    release_lag: np.ndarray


def parse_schema(path: str) -> dict:
    """Parse a key=value sidecar schema.

    Recognized keys: ``date_column``, ``frequency`` (q or m),
    ``default_release_lag``, one ``<column>=<transform code>`` line per value
    column, and optional ``<column>.release_lag=<int>`` overrides.  Lines
    starting with '#' are comments.
    """
    meta = {"date_column": "date", "frequency": None, "default_release_lag": 1}
    columns: dict[str, int] = {}
    lags: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"schema line without '=': {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "date_column":
                meta["date_column"] = value
            elif key == "frequency":
                if value not in ("q", "m"):
                    raise ValueError(f"frequency must be 'q' or 'm', got {value!r}")
                meta["frequency"] = value
            elif key == "default_release_lag":
                meta["default_release_lag"] = int(value)
            elif key.endswith(".release_lag"):
                lags[key[: -len(".release_lag")]] = int(value)
            else:
                code = int(value)
                if code not in TRANSFORM_CODES:
                    raise ValueError(f"transform code for {key!r} must be 1..8, got {code}")
                columns[key] = code
    if meta["frequency"] is None:
        raise ValueError("schema is missing the 'frequency' key")
    if not columns:
        raise ValueError("schema lists no value columns")
    return {"meta": meta, "columns": columns, "release_lags": lags}


def ingest_csv(path: str, schema_path: str) -> IngestedTable:
    """Read and transform the columns listed in the schema sidecar.

    Column order in the CSV is preserved into predictor order.  Leading
    rows made undefined by differencing are trimmed; interior missing
    values are rejected.
    """
    schema = parse_schema(schema_path)
    meta, codes = schema["meta"], schema["columns"]
    df = pd.read_csv(path)
    date_col = meta["date_column"]
    if date_col not in df.columns:
        raise ValueError(f"date column {date_col!r} not found in {path}")
    dates = pd.to_datetime(df[date_col], format="ISO8601")
    if not dates.is_monotonic_increasing or dates.duplicated().any():
        raise ValueError(f"dates in {path} must be strictly increasing")

    missing = [c for c in codes if c not in df.columns]
    if missing:
        raise ValueError(f"schema columns missing from {path}: {missing}")
    ordered = [c for c in df.columns if c in codes]

    cols = []
    for name in ordered:
        raw = pd.to_numeric(df[name], errors="raise").to_numpy(dtype=float)
        if np.isnan(raw).any():
            row = int(np.argmax(np.isnan(raw)))
            raise ValueError(f"missing value in column {name!r} at row {row}")
        cols.append(transform_series(raw, codes[name], name=name))
    values = np.column_stack(cols)

    # trim rows where any transform is still undefined
    defined = ~np.isnan(values).any(axis=1)
    first = int(np.argmax(defined)) if defined.any() else len(defined)
    if not defined[first:].all():
        bad = first + int(np.argmax(~defined[first:]))
        raise ValueError(f"interior missing value after transforms at row {bad}")
    values = values[first:]
    dates = pd.DatetimeIndex(dates[first:])

    default_lag = meta["default_release_lag"]
    release = np.array(
        [schema["release_lags"].get(name, default_lag) for name in ordered], dtype=int
    )
    return IngestedTable(
        dates=dates,
        values=values,
        names=ordered,
        frequency=meta["frequency"],
        release_lag=release,
    )


def combine_panel(target: IngestedTable, predictors: IngestedTable | None, m: int = 3) -> MixedFrequencyPanel:
    """Align a quarterly target with a monthly predictor table.

    The high-frequency sample is truncated or left-trimmed so it covers
    exactly m periods per target period, ending with the month that closes
    the last target period.
    """
    if target.values.shape[1] != 1:
        raise ValueError("target table must contain exactly one value column")
    y = target.values[:, 0]
    if predictors is None:
        return MixedFrequencyPanel(y=y, z=np.empty((len(y) * m, 0)), m=m)

    t_per = target.dates.to_period("Q")
    h_per = predictors.dates.to_period("M")
    # keep target quarters fully covered by the monthly sample
    q_start = (h_per[0] + (m - 1)).asfreq("Q")
    q_end = h_per[-1].asfreq("Q") if (h_per[-1].month % 3 == 0) else h_per[-1].asfreq("Q") - 1
    keep = (t_per >= q_start) & (t_per <= q_end)
    if not keep.any():
        raise ValueError("no target periods covered by the high-frequency sample")
    y = y[np.asarray(keep)]
    t_per = t_per[np.asarray(keep)]

    first_month = t_per[0].asfreq("M", how="start")
    last_month = t_per[-1].asfreq("M", how="end")
    sel = (h_per >= first_month) & (h_per <= last_month)
    z = predictors.values[np.asarray(sel)]
    if z.shape[0] != m * len(y):
        raise ValueError("high-frequency sample has gaps relative to the target sample")
    return MixedFrequencyPanel(
        y=y, z=z, m=m, names=list(predictors.names), release_lag=predictors.release_lag
    )
