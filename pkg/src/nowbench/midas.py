"""Univariate exponential-Almon MIDAS regressions combined by a weighted mean.

One component per monthly indicator: quarterly target regressed on L monthly
lags whose coefficients follow the two-parameter exponential Almon curve.
Component forecasts are pooled with weights proportional to how much each one
beats the worst training RMSE, so the worst component contributes nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DataError, EstimationError

# theta starting points for the nested (derivative-free) search
_THETA_STARTS = (
    (0.0, 0.0),
    (0.2, 0.0),
    (-0.2, 0.0),
    (0.5, -0.05),
    (-0.5, 0.05),
    (1.0, -0.1),
)


@dataclass
class MidasComponent:
    indicator: str
    beta0: float
    beta1: float
    theta1: float
    theta2: float
    n_lags: int
    train_rmse: float

    def weights(self) -> np.ndarray:
        return almon_weights(self.theta1, self.theta2, self.n_lags)

    def forecast(self, lag_row: np.ndarray) -> float:
        lag_row = np.asarray(lag_row, dtype=float)
        if lag_row.shape[-1] != self.n_lags:
            raise DataError(f"{self.indicator}: expected {self.n_lags} lags, got {lag_row.shape[-1]}")
        return float(self.beta0 + self.beta1 * (lag_row @ self.weights()))


def almon_weights(theta1: float, theta2: float, n_lags: int) -> np.ndarray:
    """Normalized exponential Almon weights over lags 1..n_lags."""
    if n_lags < 1:
        raise DataError("need at least one lag")
    i = np.arange(1, n_lags + 1, dtype=float)
    z = theta1 * i + theta2 * i**2
    z = z - z.max()  # overflow-safe
    w = np.exp(z)
    return w / w.sum()


def _profiled_sse(theta: np.ndarray, y: np.ndarray, X: np.ndarray) -> tuple[float, float, float]:
    """SSE at theta with (beta0, beta1) concentrated out by least squares."""
    w = almon_weights(theta[0], theta[1], X.shape[1])
    z = X @ w
    Z = np.column_stack([np.ones(len(z)), z])
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    resid = y - Z @ coef
    return float(resid @ resid), float(coef[0]), float(coef[1])


def midas_fit_univariate(y_q, x_lags, indicator: str = "x") -> MidasComponent:
    """Fit one component by nested optimization.

    ``x_lags`` has one row per quarter and one column per monthly lag
    (column 0 = the quarter's reference month, ascending lag age).
    """
    y = np.asarray(y_q, dtype=float).ravel()
    X = np.asarray(x_lags, dtype=float)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DataError(f"{indicator}: lag matrix must be (n_quarters, n_lags)")
    if np.isnan(X).any() or np.isnan(y).any():
        raise DataError(f"{indicator}: missing values must be filled before MIDAS estimation")
    L = X.shape[1]

    if L == 1:
        # single weight = 1, theta irrelevant: plain regression on the one lag
        sse, b0, b1 = _profiled_sse(np.zeros(2), y, X)
        return MidasComponent(indicator, b0, b1, 0.0, 0.0, 1, float(np.sqrt(sse / len(y))))

    best: tuple[float, np.ndarray] | None = None
    for start in _THETA_STARTS:
        res = minimize(
            lambda th: _profiled_sse(th, y, X)[0],
            np.asarray(start, dtype=float),
            method="Nelder-Mead",
            options={"maxiter": 600, "xatol": 1e-8, "fatol": 1e-12},
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best[0]):
            best = (float(res.fun), res.x.copy())
    if best is None:
        raise EstimationError(f"{indicator}: no Almon start converged", "midas")
    sse, b0, b1 = _profiled_sse(best[1], y, X)
    return MidasComponent(indicator, b0, b1, float(best[1][0]), float(best[1][1]), L, float(np.sqrt(sse / len(y))))


def combination_weights(rmses) -> np.ndarray:
    """Weights proportional to (worst RMSE - own RMSE); the worst component
    gets exactly zero. All-tied components share equal weights."""
    r = np.asarray(rmses, dtype=float)
    if len(r) < 2:
        raise DataError("combination needs at least two components")
    raw = r.max() - r
    if raw.sum() == 0.0:
        return np.full(len(r), 1.0 / len(r))
    return raw / raw.sum()


def midas_combine(components: list[MidasComponent], lag_rows: dict[str, np.ndarray]) -> float:
    """Weighted-mean nowcast across components; lag rows must already have
    ragged-edge months filled."""
    if len(components) < 2:
        raise DataError("combination needs at least two components")
    weights = combination_weights([c.train_rmse for c in components])
    forecasts = np.array([c.forecast(lag_rows[c.indicator]) for c in components])
    return float(weights @ forecasts)
