"""MIDAS weight matrices and the inverse-length-scale structure they imply.

A weight matrix W (n_lags x n_cols) maps a block of high-frequency lags onto
a smaller set of compressed regressors.  Seven schemes are supported:

==========  =======================================  ==============
scheme      weights                                  columns
==========  =======================================  ==============
``u``       unrestricted, W = identity               n_lags
``br``      equal weights 1/n_lags                   1
``xalm``    two-parameter exponential Almon vector   1
``alm``     raw power polynomial basis               degree + 1
``leg``     shifted Legendre basis                   degree + 1
``ber``     Bernstein basis                          degree + 1
``fou``     Fourier basis                            degree + 1
==========  =======================================  ==============

Lag indices for ``alm``/``leg``/``ber`` are normalized to [0, 1] via
p / (n_lags - 1) before the basis is evaluated; ``fou`` uses the raw lag
index with angular frequency 2*pi / (degree * m).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

SCHEMES = ("u", "br", "xalm", "alm", "leg", "ber", "fou")

# schemes whose basis is a degree-(L) polynomial family in the lag index
POLY_SCHEMES = ("alm", "leg", "ber", "fou")


@dataclass(frozen=True)
class MidasWeightMatrix:
    """Weight matrix for one MIDAS scheme.

    Attributes
    ----------
    scheme : str
        One of ``SCHEMES``.
    n_lags : int
        Number of high-frequency lags (rows of ``values``).
    degree : int
        Polynomial degree L; canonicalized to 1 for ``br``/``xalm`` and to
        ``n_lags - 1`` for ``u``.
    values : np.ndarray
        The (n_lags x n_cols) matrix of basis weights.
    theta : tuple[float, float] | None
        Exponential Almon parameters, present only for ``xalm``.
    """

    scheme: str
    n_lags: int
    degree: int
    values: np.ndarray
    theta: tuple[float, float] | None = None

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ImpliedLengthScale:
    """Block-diagonal inverse-length-scale metric lam * W W' per predictor.

    ``block`` is the shared (n_lags x n_lags) block; the full metric over K
    stacked predictor lag blocks is kron(I_K, block).
    """

    block: np.ndarray
    lam: float
    n_blocks: int

    def full_matrix(self) -> np.ndarray:
        return np.kron(np.eye(self.n_blocks), self.block)


def exponential_almon_weights(n_lags: int, theta1: float, theta2: float) -> np.ndarray:
    """Normalized exponential Almon lag weights.

    Entry r is (exp(theta1*r) + exp(theta2*r^2)) / normalizer for
    r = 0, ..., n_lags-1, so the weights are nonnegative and sum to one.
    Evaluated in a max-shifted log scale so large |theta| do not overflow.
    """
    r = np.arange(n_lags, dtype=float)
    a = theta1 * r
    b = theta2 * r**2
    shift = max(a.max(), b.max())
    raw = np.exp(a - shift) + np.exp(b - shift)
    return raw / raw.sum()


def _legendre_columns(x: np.ndarray, degree: int) -> np.ndarray:
    """Legendre polynomials up to ``degree`` on x in [-1, 1], by recurrence."""
    cols = np.empty((x.size, degree + 1))
    cols[:, 0] = 1.0
    if degree >= 1:
        cols[:, 1] = x
    for l in range(1, degree):
        cols[:, l + 1] = ((2 * l + 1) * x * cols[:, l] - l * cols[:, l - 1]) / (l + 1)
    return cols


def build_weight_matrix(
    scheme: str,
    n_lags: int,
    degree: int = 1,
    m: int = 3,
    theta: tuple[float, float] | None = None,
) -> MidasWeightMatrix:
    """Construct the weight matrix for a named MIDAS scheme.

    Parameters
    ----------
    scheme : str
        One of ``SCHEMES``.
    n_lags : int
        Number of high-frequency lags P_H (>= 1).
    degree : int
        Polynomial degree L for the ``alm``/``leg``/``ber``/``fou`` families
        (ignored by ``u``/``br``/``xalm``).
    m : int
        Frequency ratio; only enters the ``fou`` angular frequency.
    theta : (float, float), optional
        Required for ``xalm``; ignored otherwise.

    Raises
    ------
    ValueError
        Unknown scheme, missing theta for ``xalm``, nonpositive degree for a
        polynomial family, or n_lags too small for the requested basis.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown MIDAS scheme {scheme!r}; expected one of {SCHEMES}")
    if n_lags < 1:
        raise ValueError("n_lags must be >= 1")
    if m < 1:
        raise ValueError("m must be >= 1")

    if scheme == "u":
        return MidasWeightMatrix("u", n_lags, n_lags - 1, np.eye(n_lags))

    if scheme == "br":
        values = np.full((n_lags, 1), 1.0 / n_lags)
        return MidasWeightMatrix("br", n_lags, 1, values)

    if scheme == "xalm":
        if theta is None:
            raise ValueError("scheme 'xalm' requires theta=(theta1, theta2)")
        t1, t2 = float(theta[0]), float(theta[1])
        values = exponential_almon_weights(n_lags, t1, t2)[:, None]
        return MidasWeightMatrix("xalm", n_lags, 1, values, theta=(t1, t2))

    # polynomial families
    if degree < 1:
        raise ValueError(f"scheme {scheme!r} requires degree >= 1, got {degree}")

    p = np.arange(n_lags, dtype=float)
    if scheme == "fou":
        omega = 2.0 * np.pi / (degree * m)
        values = np.empty((n_lags, degree + 1))
        values[:, 0] = 1.0
        for l in range(1, degree + 1):
            values[:, l] = np.cos(l * omega * p) if l % 2 == 1 else np.sin(l * omega * p)
        return MidasWeightMatrix("fou", n_lags, degree, values)

    # alm/leg/ber evaluate on the normalized index p / (n_lags - 1)
    if n_lags == 1:
        raise ValueError(f"scheme {scheme!r} with degree > 0 needs n_lags >= 2")
    p_norm = p / (n_lags - 1)

    if scheme == "alm":
        values = p_norm[:, None] ** np.arange(degree + 1)[None, :]
    elif scheme == "leg":
        values = _legendre_columns(2.0 * p_norm - 1.0, degree)
    else:  # ber
        ls = np.arange(degree + 1)
        binom = np.array([comb(degree, l) for l in ls], dtype=float)
        values = binom[None, :] * p_norm[:, None] ** ls[None, :] * (1.0 - p_norm[:, None]) ** (
            degree - ls
        )[None, :]
    return MidasWeightMatrix(scheme, n_lags, degree, values)


def implied_inverse_length_scale(
    W: MidasWeightMatrix, lam: float, n_blocks: int
) -> ImpliedLengthScale:
    """Per-predictor inverse-length-scale block lam * W W'.

    The kernel on compressed inputs X = Z (I_K (x) W) with a common inverse
    length scale lam equals the kernel on the raw lag stack with the
    block-diagonal metric kron(I_K, lam * W W').
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    block = lam * (W.values @ W.values.T)
    block = (block + block.T) / 2.0
    return ImpliedLengthScale(block=block, lam=lam, n_blocks=n_blocks)


def compress_lag_stack(Z: np.ndarray, W: MidasWeightMatrix, n_series: int) -> np.ndarray:
    """Apply (I_K (x) W') to rows of a stacked lag matrix.

    Z has shape (n, K * n_lags) with each predictor's n_lags most recent
    lags contiguous (most recent first).  Returns (n, K * n_cols).
    """
    n = Z.shape[0]
    if Z.shape[1] != n_series * W.n_lags:
        raise ValueError(
            f"lag stack has {Z.shape[1]} columns, expected {n_series} x {W.n_lags}"
        )
    blocks = Z.reshape(n, n_series, W.n_lags)
    return (blocks @ W.values).reshape(n, n_series * W.n_cols)
