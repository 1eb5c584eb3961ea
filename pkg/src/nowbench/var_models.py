"""VAR estimated equation-by-equation, and a Minnesota-prior Bayesian VAR.

Both operate on the stacked quarterly representation (three quarterly columns
per monthly series plus the quarterly series and the target), so the
mixed-frequency problem is handled before the VAR ever sees the data. The
Bayesian variant shrinks toward univariate dynamics: own-lag prior mean
``delta``, cross-variable terms damped by ``lambda2``, distant lags damped by
``l^(2*lambda3)``, everything scaled by the overall tightness ``lambda1``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

_INTERCEPT_PRIOR_VAR = 1.0e6  # effectively diffuse, independent of lambda1
_RIDGE_EPS = 1.0e-6


@dataclass
class MinnesotaPrior:
    lambda1: float = 0.2  # overall tightness
    lambda2: float = 0.5  # cross-variable weight
    lambda3: float = 1.0  # lag decay
    delta: float = 0.0  # prior mean on the own first lag (0: growth rates)
    iw_dof: int | None = None  # defaults to n_vars + 2
    iw_scale: np.ndarray | None = None  # defaults to diag of AR residual variances

    def __post_init__(self):
        if self.lambda1 <= 0:
            raise DataError("lambda1 must be positive")
        if not 0 < self.lambda2 <= 1:
            raise DataError("lambda2 must lie in (0, 1]")
        if self.lambda3 < 0:
            raise DataError("lambda3 must be non-negative")


@dataclass
class VarModel:
    variables: list[str]
    p: int
    intercept: np.ndarray  # (n,)
    coef: list[np.ndarray]  # A_1..A_p, each (n, n)
    sigma: np.ndarray  # residual covariance (n, n)

    @property
    def n_vars(self) -> int:
        return len(self.variables)


def _lag_design(Y: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Regressor matrix [1, y_{t-1}, ..., y_{t-p}] and matching targets."""
    T, n = Y.shape
    rows = T - p
    X = np.ones((rows, 1 + n * p))
    for l in range(1, p + 1):
        X[:, 1 + (l - 1) * n : 1 + l * n] = Y[p - l : T - l]
    return X, Y[p:]


def _model_from_coef(B: np.ndarray, variables: list[str], p: int, sigma: np.ndarray) -> VarModel:
    n = len(variables)
    intercept = B[0].copy()
    coef = [B[1 + (l - 1) * n : 1 + l * n].T.copy() for l in range(1, p + 1)]
    return VarModel(list(variables), p, intercept, coef, sigma)


def _as_matrix(Y) -> tuple[np.ndarray, list[str]]:
    if hasattr(Y, "columns"):
        return Y.to_numpy(dtype=float), [str(c) for c in Y.columns]
    Y = np.asarray(Y, dtype=float)
    return Y, [f"y{i}" for i in range(Y.shape[1])]


def ar_residual_variances(Y: np.ndarray) -> np.ndarray:
    """Residual variance of a univariate AR(1) fit per column (prior scales)."""
    T, n = Y.shape
    out = np.empty(n)
    for j in range(n):
        X = np.column_stack([np.ones(T - 1), Y[:-1, j]])
        coef, *_ = np.linalg.lstsq(X, Y[1:, j], rcond=None)
        resid = Y[1:, j] - X @ coef
        out[j] = max(float(resid @ resid) / max(len(resid) - 2, 1), 1e-12)
    return out


def var_fit(Y, p: int) -> VarModel:
    """Per-equation least squares VAR(p).

    With too few rows for the parameter count the solve is ridge-stabilized
    and a warning is logged rather than failing outright.
    """
    Ym, variables = _as_matrix(Y)
    T, n = Ym.shape
    if p < 0:
        raise DataError("lag order must be non-negative")
    if T <= p:
        raise DataError(f"need more than {p} rows to fit VAR({p})")
    X, Z = _lag_design(Ym, p)
    k = X.shape[1]
    if X.shape[0] <= k:
        log.warning("var_fit: %d rows for %d parameters per equation; ridge-stabilized solve", X.shape[0], k)
        G = X.T @ X
        eps = _RIDGE_EPS * (np.trace(G) / k + 1.0)
        B = np.linalg.solve(G + eps * np.eye(k), X.T @ Z)
    else:
        B, *_ = np.linalg.lstsq(X, Z, rcond=None)
    E = Z - X @ B
    dof = max(X.shape[0] - k, 1)
    sigma = E.T @ E / dof
    return _model_from_coef(B, variables, p, sigma)


def bvar_fit(Y, p: int, prior: MinnesotaPrior | None = None) -> VarModel:
    """Posterior-mean VAR(p) under a Minnesota prior with an inverse-Wishart
    error-covariance prior. Rows may be fewer than parameters; shrinkage is
    the point."""
    prior = prior or MinnesotaPrior()
    Ym, variables = _as_matrix(Y)
    T, n = Ym.shape
    if T <= p + 1:
        raise DataError(f"need more than {p + 1} rows to fit BVAR({p})")
    dof = prior.iw_dof if prior.iw_dof is not None else n + 2
    if dof <= n + 1:
        raise DataError(f"inverse-Wishart dof must exceed n_vars + 1 = {n + 1}")
    X, Z = _lag_design(Ym, p)
    k = X.shape[1]
    sig2 = ar_residual_variances(Ym)

    B = np.empty((k, n))
    gram = X.T @ X
    for i in range(n):
        prior_var = np.empty(k)
        prior_mean = np.zeros(k)
        prior_var[0] = _INTERCEPT_PRIOR_VAR
        for l in range(1, p + 1):
            for j in range(n):
                pos = 1 + (l - 1) * n + j
                if j == i:
                    prior_var[pos] = prior.lambda1**2 / l ** (2 * prior.lambda3)
                else:
                    prior_var[pos] = (
                        prior.lambda1**2 * prior.lambda2 * sig2[i] / (sig2[j] * l ** (2 * prior.lambda3))
                    )
        if p >= 1:
            prior_mean[1 + i] = prior.delta
        penalty = sig2[i] / prior_var
        lhs = gram + np.diag(penalty)
        rhs = X.T @ Z[:, i] + penalty * prior_mean
        B[:, i] = np.linalg.solve(lhs, rhs)

    E = Z - X @ B
    scale = prior.iw_scale if prior.iw_scale is not None else np.diag(sig2)
    # posterior mean of the inverse-Wishart error covariance
    sigma = (scale + E.T @ E) / (dof + X.shape[0] - n - 1)
    return _model_from_coef(B, variables, p, sigma)


def var_forecast(model: VarModel, history, h: int) -> np.ndarray:
    """Iterated linear forecasts; returns an (h, n) array."""
    if h < 1:
        raise DataError("forecast horizon must be >= 1")
    hist, _ = _as_matrix(history) if hasattr(history, "columns") else (np.asarray(history, dtype=float), None)
    if hist.ndim == 1:
        hist = hist.reshape(1, -1)
    if hist.shape[0] < model.p:
        raise DataError(f"history must contain at least p = {model.p} rows")
    rows = [hist[i] for i in range(hist.shape[0])]
    out = np.empty((h, model.n_vars))
    for step in range(h):
        val = model.intercept.copy()
        for l in range(1, model.p + 1):
            val = val + model.coef[l - 1] @ rows[-l]
        rows.append(val)
        out[step] = val
    return out
