"""Post-hoc variable importance via a Lasso surrogate on predictive medians.

The surrogate minimizes sum_t (yhat_t - x_t' b)^2 + rho * sum_i |b_i| by
cyclic coordinate descent on centered data (the intercept is unpenalized
and handled by centering).  The penalty is selected on a log-spaced grid by
contiguous-block cross-validation that respects time order, and
coefficients of columns belonging to the same underlying variable are
summed into per-variable importances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd


def soft_threshold(z: float, threshold: float) -> float:
    if z > threshold:
        return z - threshold
    if z < -threshold:
        return z + threshold
    return 0.0


def lasso_coordinate_descent(
    X: np.ndarray,
    y: np.ndarray,
    rho: float,
    beta0: np.ndarray | None = None,
    tol: float = 1e-12,
    max_sweeps: int = 10000,
) -> np.ndarray:
    """Minimize ||y - X b||^2 + rho ||b||_1 by cyclic coordinate descent.

    Data are used as passed (no internal centering).  Warm starts via
    ``beta0`` make the penalty path cheap.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, M = X.shape
    col_ss = np.einsum("ij,ij->j", X, X)
    Xty = X.T @ y
    XtX = X.T @ X
    beta = np.zeros(M) if beta0 is None else beta0.copy()
    grad_cache = XtX @ beta
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(M):
            if col_ss[j] <= 0:
                continue
            zj = Xty[j] - grad_cache[j] + col_ss[j] * beta[j]
            new = soft_threshold(zj, rho / 2.0) / col_ss[j]
            delta = new - beta[j]
            if delta != 0.0:
                grad_cache += XtX[:, j] * delta
                beta[j] = new
                max_delta = max(max_delta, abs(delta))
        if max_delta < tol:
            break
    return beta


def rho_grid_from_data(X: np.ndarray, y: np.ndarray, n_points: int = 50, decades: float = 4.0):
    """Log-spaced penalty grid from the all-zeros point down ``decades`` decades."""
    rho_max = 2.0 * float(np.max(np.abs(X.T @ y)))
    if rho_max <= 0:
        rho_max = 1.0
    return np.logspace(np.log10(rho_max), np.log10(rho_max) - decades, n_points)


def contiguous_folds(n: int, n_folds: int) -> list[np.ndarray]:
    """Contiguous index blocks preserving time order."""
    bounds = np.linspace(0, n, n_folds + 1).astype(int)
    return [np.arange(bounds[i], bounds[i + 1]) for i in range(n_folds)]


@dataclass
class LassoImportance:
    coef: np.ndarray
    column_names: list[str]
    rho: float
    cv_errors: np.ndarray
    rho_grid: np.ndarray
    by_variable: pd.Series
    all_zero: bool


def _group_label(name: str) -> str:
    """Column names like 'INDPRO[2]' or 'y_lag3' aggregate by base variable."""
    base = name.split("[", 1)[0]
    if base.startswith("y_lag"):
        return "y"
    return base


def lasso_importance(
    medians: np.ndarray,
    X: np.ndarray,
    column_names: list[str] | None = None,
    n_rho: int = 50,
    n_folds: int = 5,
    rng: np.random.Generator | None = None,
) -> LassoImportance:
    """Cross-validated Lasso of predictive medians on the design rows.

    The medians are centered (unpenalized intercept); X is expected to be
    standardized already.  Returns the coefficient vector at the selected
    penalty plus per-variable coefficient sums.  ``rng`` is accepted for
    interface stability; the contiguous folds make the procedure
    deterministic without it.
    """
    y = np.asarray(medians, dtype=float)
    X = np.asarray(X, dtype=float)
    if len(y) != X.shape[0]:
        raise ValueError("medians and design rows are misaligned")
    if len(y) < 20:
        raise ValueError("need a holdout of at least 20 origins")
    if column_names is None:
        column_names = [f"x{j}" for j in range(X.shape[1])]

    yc = y - y.mean()
    grid = rho_grid_from_data(X, yc, n_points=n_rho)
    folds = contiguous_folds(len(y), n_folds)

    cv_err = np.zeros(len(grid))
    for fold in folds:
        train = np.setdiff1d(np.arange(len(y)), fold)
        ytr = y[train] - y[train].mean()
        yte_offset = y[train].mean()
        warm = None
        for gi, rho in enumerate(grid):
            warm = lasso_coordinate_descent(X[train], ytr, rho, beta0=warm)
            pred = X[fold] @ warm + yte_offset
            cv_err[gi] += float(np.mean((y[fold] - pred) ** 2))
    cv_err /= n_folds

    best = int(np.argmin(cv_err))
    rho = float(grid[best])
    warm = None
    for gi in range(best + 1):
        warm = lasso_coordinate_descent(X, yc, float(grid[gi]), beta0=warm)
    coef = warm

    groups = pd.Series(coef, index=[_group_label(n) for n in column_names])
    by_variable = groups.groupby(level=0).sum().sort_values(key=np.abs, ascending=False)
    return LassoImportance(
        coef=coef,
        column_names=list(column_names),
        rho=rho,
        cv_errors=cv_err,
        rho_grid=grid,
        by_variable=by_variable,
        all_zero=bool(np.all(coef == 0.0)),
    )


def kkt_violation(X: np.ndarray, y: np.ndarray, beta: np.ndarray, rho: float) -> float:
    """Largest violation of the stationarity conditions at ``beta``.

    For the objective ||y - Xb||^2 + rho ||b||_1 the gradient of the smooth
    part must lie within [-rho, rho] at zero coefficients and equal
    -rho * sign(b_j) elsewhere.
    """
    grad = -2.0 * (X.T @ (y - X @ beta))
    viol = 0.0
    for j, b in enumerate(beta):
        if b == 0.0:
            viol = max(viol, abs(grad[j]) - rho)
        else:
            viol = max(viol, abs(grad[j] + rho * np.sign(b)))
    return float(viol)
