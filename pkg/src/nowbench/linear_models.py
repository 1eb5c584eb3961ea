"""OLS and ridge regression on the stacked design matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .validation import check_design, check_feature_count

log = logging.getLogger(__name__)


@dataclass
class LinearModel:
    intercept: float
    coef: np.ndarray
    alpha: float = 0.0  # 0 for OLS
    x_means: np.ndarray | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        centered = X if self.x_means is None else X - self.x_means
        return self.intercept + centered @ self.coef


def ols_fit(X, y) -> LinearModel:
    """Least squares via SVD; rank-deficient systems get the minimum-norm
    solution and a logged warning."""
    X, y = check_design(X, y)
    if X.shape[0] < 2:
        raise ValueError("OLS needs at least two rows")
    Z = np.column_stack([np.ones(X.shape[0]), X])
    coef, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    if rank < Z.shape[1]:
        log.warning("ols_fit: rank-deficient design (rank %d < %d); minimum-norm solution", rank, Z.shape[1])
    return LinearModel(intercept=float(coef[0]), coef=coef[1:], alpha=0.0)


def ridge_fit(X, y, alpha: float) -> LinearModel:
    """Ridge on centered data with an unpenalized intercept.

    Solves (Xc'Xc + alpha I) b = Xc'yc; the intercept is the target mean, so
    predictions are mean(y) + (x - x̄)'b.
    """
    X, y = check_design(X, y)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    x_means = X.mean(axis=0)
    Xc = X - x_means
    yc = y - y.mean()
    k = X.shape[1]
    coef = np.linalg.solve(Xc.T @ Xc + alpha * np.eye(k), Xc.T @ yc)
    return LinearModel(intercept=float(y.mean()), coef=coef, alpha=float(alpha), x_means=x_means)


class OlsRegressor(BaseEstimator, RegressorMixin):
    """sklearn-style wrapper around :func:`ols_fit`."""

    def fit(self, X, y):
        self.model_ = ols_fit(X, y)
        self.n_features_in_ = self.model_.coef.shape[0]
        return self

    def predict(self, X):
        X = check_design(X)
        check_feature_count(X, self.n_features_in_)
        return self.model_.predict(X)


class RidgeRegressor(BaseEstimator, RegressorMixin):
    """sklearn-style wrapper around :func:`ridge_fit`."""

    def __init__(self, alpha: float = 1.0):
        self.alpha = alpha

    def fit(self, X, y):
        self.model_ = ridge_fit(X, y, self.alpha)
        self.n_features_in_ = self.model_.coef.shape[0]
        return self

    def predict(self, X):
        X = check_design(X)
        check_feature_count(X, self.n_features_in_)
        return self.model_.predict(X)
