"""Univariate ARMA(p, q) benchmark with AIC order selection.

Estimation minimizes the conditional sum of squares (pre-sample residuals set
to zero) via derivative-free Nelder-Mead on the concentrated Gaussian
log-likelihood. No differencing: inputs are already growth rates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import EstimationError

# characteristic roots are kept strictly inside the unit circle; without the
# margin, CSS estimation can park a near-cancelling AR/MA pair on the boundary
# and harvest a spurious likelihood gain from a single periodogram spike
_MAX_ROOT = 0.98


@dataclass
class ArmaModel:
    p: int
    q: int
    const: float
    ar: np.ndarray  # phi_1..phi_p
    ma: np.ndarray  # psi_1..psi_q
    sigma2: float
    loglik: float
    aic: float

    @property
    def n_params(self) -> int:
        # intercept and innovation variance count toward AIC
        return self.p + self.q + 2

    def unconditional_mean(self) -> float:
        return self.const / (1.0 - self.ar.sum()) if self.p else self.const


def _css_residuals(
    y: np.ndarray, const: float, ar: np.ndarray, ma: np.ndarray, n_condition: int | None = None
) -> np.ndarray:
    """Residuals e_t for t = s+1..T with pre-sample residuals fixed at zero.

    ``n_condition`` (default p) sets how many leading observations are used
    only as conditioning values; a common value makes AICs comparable across
    candidate orders.
    """
    p, q = len(ar), len(ma)
    s = p if n_condition is None else max(p, n_condition)
    u = y[s:] - const
    for i in range(p):
        u = u - ar[i] * y[s - 1 - i : len(y) - 1 - i]
    if q == 0:
        return u
    return lfilter([1.0], np.concatenate(([1.0], ma)), u)


def _is_stationary(ar: np.ndarray) -> bool:
    if len(ar) == 0:
        return True
    roots = np.roots(np.concatenate(([1.0], -ar)))
    return bool(len(roots) == 0 or np.max(np.abs(roots)) < _MAX_ROOT)


def _is_invertible(ma: np.ndarray) -> bool:
    if len(ma) == 0:
        return True
    roots = np.roots(np.concatenate(([1.0], ma)))
    return bool(len(roots) == 0 or np.max(np.abs(roots)) < _MAX_ROOT)


def _is_redundant(ar: np.ndarray, ma: np.ndarray, tol: float = 0.05) -> bool:
    """Near-common AR/MA characteristic roots: the pair cancels and the model
    is not identified (CSS loves to hide a periodogram spike in such pairs)."""
    if len(ar) == 0 or len(ma) == 0:
        return False
    ar_roots = np.roots(np.concatenate(([1.0], -ar)))
    ma_roots = np.roots(np.concatenate(([1.0], ma)))
    dist = np.abs(ar_roots[:, None] - ma_roots[None, :])
    return bool(dist.min() < tol)


def _unpack(theta: np.ndarray, p: int, q: int) -> tuple[float, np.ndarray, np.ndarray]:
    return theta[0], theta[1 : 1 + p], theta[1 + p : 1 + p + q]


def _neg_loglik(theta: np.ndarray, y: np.ndarray, p: int, q: int, n_condition: int | None = None) -> float:
    const, ar, ma = _unpack(theta, p, q)
    if not _is_stationary(ar) or not _is_invertible(ma):
        return 1e12
    e = _css_residuals(y, const, ar, ma, n_condition)
    css = float(e @ e)
    n = len(e)
    sigma2 = css / n
    if not np.isfinite(sigma2) or sigma2 <= 0:
        return 1e12
    # concentrated conditional Gaussian log-likelihood
    return 0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0)


def _start_values(y: np.ndarray, p: int, q: int) -> np.ndarray:
    theta = np.zeros(1 + p + q)
    theta[0] = y.mean()
    if p:
        # least-squares AR start, shrunk for safety
        X = np.column_stack([y[p - 1 - i : len(y) - 1 - i] for i in range(p)])
        X = np.column_stack([np.ones(len(X)), X])
        coef, *_ = np.linalg.lstsq(X, y[p:], rcond=None)
        theta[0] = coef[0]
        theta[1 : 1 + p] = 0.9 * coef[1:]
        if not _is_stationary(theta[1 : 1 + p]):
            theta[1 : 1 + p] *= 0.5
    return theta


def fit_arma(y, p: int, q: int, *, max_iter: int = 2000, n_condition: int | None = None) -> ArmaModel:
    """Estimate ARMA(p, q) by conditional sum of squares.

    Raises on non-convergence or a non-stationary optimum that survives a
    restart from a shrunk starting point. ``n_condition`` widens the
    conditioning pre-sample (used by order search to keep AICs comparable).
    """
    y = np.asarray(y, dtype=float).ravel()
    if np.isnan(y).any():
        raise EstimationError("ARMA input contains missing values", "arma")
    if len(y) < 10 * (p + q + 1):
        raise EstimationError(f"need at least {10 * (p + q + 1)} observations for ARMA({p},{q}), got {len(y)}", "arma")

    if p == 0 and q == 0:
        s = 0 if n_condition is None else n_condition
        yy = y[s:]
        const = float(yy.mean())
        sigma2 = float(yy.var())
        if sigma2 <= 0:
            raise EstimationError("constant series: zero innovation variance", "arma")
        n = len(yy)
        loglik = -0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0)
        return ArmaModel(0, 0, const, np.empty(0), np.empty(0), sigma2, loglik, 2 * 2 - 2 * loglik)

    theta0 = _start_values(y, p, q)
    best = None
    for attempt in range(3):
        res = minimize(
            _neg_loglik,
            theta0,
            args=(y, p, q, n_condition),
            method="Nelder-Mead",
            options={"maxiter": max_iter, "xatol": 1e-7, "fatol": 1e-9},
        )
        const, ar, ma = _unpack(res.x, p, q)
        if res.fun < 1e11 and _is_stationary(ar) and _is_invertible(ma):
            best = res
            break
        theta0 = res.x.copy()
        theta0[1:] *= 0.5  # shrink toward white noise and retry
    if best is None:
        raise EstimationError(f"ARMA({p},{q}) did not reach a stationary optimum", "arma")

    const, ar, ma = _unpack(best.x, p, q)
    if _is_redundant(ar, ma):
        raise EstimationError(f"ARMA({p},{q}) optimum has near-cancelling AR/MA roots (not identified)", "arma")
    e = _css_residuals(y, const, ar, ma, n_condition)
    n = len(e)
    sigma2 = float(e @ e) / n
    if sigma2 <= 0:
        raise EstimationError("degenerate fit: zero innovation variance", "arma")
    loglik = -0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0)
    k = p + q + 2
    return ArmaModel(p, q, float(const), ar.copy(), ma.copy(), sigma2, loglik, 2 * k - 2 * loglik)


def auto_order(y, p_max: int = 5, q_max: int = 5) -> tuple[int, int]:
    """Exhaustive AIC search over the (p_max+1) x (q_max+1) order grid.

    Candidates share a common conditioning pre-sample of length p_max so that
    their likelihoods cover the same observations; non-converging candidates
    are skipped.
    """
    y = np.asarray(y, dtype=float).ravel()
    best: tuple[float, int, int] | None = None
    failures = []
    for p in range(p_max + 1):
        for q in range(q_max + 1):
            try:
                model = fit_arma(y, p, q, n_condition=p_max)
            except EstimationError as exc:
                failures.append(f"({p},{q}): {exc}")
                continue
            if best is None or model.aic < best[0]:
                best = (model.aic, p, q)
    if best is None:
        raise EstimationError("no ARMA candidate converged:\n" + "\n".join(failures), "arma")
    return best[1], best[2]


def forecast(model: ArmaModel, y, h: int) -> np.ndarray:
    """Iterated conditional-expectation forecasts for horizons 1..h.

    MA terms use in-sample CSS residuals; residuals beyond the sample are zero.
    """
    if h < 1:
        raise ValueError("forecast horizon must be >= 1")
    y = np.asarray(y, dtype=float).ravel()
    p, q = model.p, model.q
    resid = np.zeros(len(y))
    if p + q > 0 and len(y) > p:
        resid[p:] = _css_residuals(y, model.const, model.ar, model.ma)
    hist = list(y)
    res = list(resid)
    out = np.empty(h)
    for step in range(h):
        val = model.const
        for i in range(p):
            val += model.ar[i] * hist[-1 - i]
        for j in range(q):
            idx = len(res) - 1 - j
            # residuals for forecast periods are zero by construction
            val += model.ma[j] * (res[idx] if idx < len(resid) else 0.0)
        hist.append(val)
        res.append(0.0)
        out[step] = val
    return out
