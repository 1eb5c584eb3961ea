"""Regression trees: single CART, random forest, gradient boosting.

Plain greedy CART with squared-error splits at midpoints between consecutive
distinct feature values, ties broken by lowest feature index then lowest
threshold. The ensembles reuse the same tree fitter: bootstrap rows plus
per-split feature subsampling for the forest, stage-wise residual fitting for
boosting. Predictions of every member stay inside the training target range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .errors import DataError, SchemaError
from .validation import check_design, check_feature_count

_REL_EPS = 1e-12


@dataclass
class TreeNode:
    value: float
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass
class RegressionTree:
    root: TreeNode
    n_features: int
    max_depth: int | None
    min_samples_leaf: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = node.value
        return out


@dataclass
class TreeEnsemble:
    mode: str  # "forest" | "boosted"
    trees: list[RegressionTree]
    n_features: int
    learning_rate: float = 1.0  # boosted only
    base_prediction: float = 0.0  # boosted only
    feature_fraction: float = 1.0  # forest only
    bootstrap: bool = True  # forest only

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.mode == "forest":
            return np.mean([t.predict(X) for t in self.trees], axis=0)
        acc = np.full(X.shape[0], self.base_prediction)
        for t in self.trees:
            acc = acc + self.learning_rate * t.predict(X)
        return acc


def _best_split(X: np.ndarray, y: np.ndarray, feat_idx: np.ndarray, min_leaf: int):
    """Best (feature, threshold) by squared-error reduction, vectorized over
    the candidate features. Returns None when no admissible split gains."""
    n = len(y)
    if n < 2 * min_leaf:
        return None
    Xs = X[:, feat_idx]
    order = np.argsort(Xs, axis=0, kind="stable")
    xs = np.take_along_axis(Xs, order, axis=0)
    ys = y[order]  # (n, f)
    csum = np.cumsum(ys, axis=0)
    total = float(y.sum())
    parent = total**2 / n
    counts = np.arange(1, n, dtype=float)[:, None]
    left = csum[:-1] ** 2 / counts
    right = (total - csum[:-1]) ** 2 / (n - counts)
    gains = left + right - parent  # SSE reduction at split after row i
    valid = xs[:-1] < xs[1:]
    if min_leaf > 1:
        pos = np.arange(1, n)[:, None]
        valid = valid & (pos >= min_leaf) & (n - pos >= min_leaf)
    gains = np.where(valid, gains, -np.inf)
    flat_best = gains.max()
    sse_parent = float(y @ y) - parent
    if not np.isfinite(flat_best) or flat_best <= _REL_EPS * max(sse_parent, 1e-30):
        return None
    col = int(np.argmax(gains.max(axis=0)))  # first max = lowest feature index
    row = int(np.argmax(gains[:, col]))  # first max = lowest threshold
    threshold = 0.5 * (xs[row, col] + xs[row + 1, col])
    return int(feat_idx[col]), float(threshold), float(gains[row, col])


def _grow(X, y, idx, depth, max_depth, min_leaf, rng, feature_fraction) -> TreeNode:
    node_y = y[idx]
    value = float(node_y.mean())
    if (max_depth is not None and depth >= max_depth) or len(idx) < 2 * min_leaf:
        return TreeNode(value)
    d = X.shape[1]
    if rng is not None and feature_fraction < 1.0:
        k = max(1, int(round(feature_fraction * d)))
        feat_idx = np.sort(rng.choice(d, size=k, replace=False))
    else:
        feat_idx = np.arange(d)
    found = _best_split(X[idx], node_y, feat_idx, min_leaf)
    if found is None:
        return TreeNode(value)
    feature, threshold, _ = found
    go_left = X[idx, feature] <= threshold
    left = _grow(X, y, idx[go_left], depth + 1, max_depth, min_leaf, rng, feature_fraction)
    right = _grow(X, y, idx[~go_left], depth + 1, max_depth, min_leaf, rng, feature_fraction)
    return TreeNode(value, feature, threshold, left, right)


def cart_fit(
    X,
    y,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    *,
    rng: np.random.Generator | None = None,
    feature_fraction: float = 1.0,
) -> RegressionTree:
    X, y = check_design(X, y)
    if min_samples_leaf < 1:
        raise DataError("min_samples_leaf must be >= 1")
    if X.shape[0] < 2 * min_samples_leaf:
        raise DataError(f"need at least {2 * min_samples_leaf} rows, got {X.shape[0]}")
    idx = np.arange(X.shape[0])
    root = _grow(X, y, idx, 0, max_depth, min_samples_leaf, rng, feature_fraction)
    return RegressionTree(root, X.shape[1], max_depth, min_samples_leaf)


def forest_fit(
    X,
    y,
    n_trees: int = 500,
    feature_fraction: float = 1.0 / 3.0,
    max_depth: int | None = None,
    min_samples_leaf: int = 2,
    bootstrap: bool = True,
    seed: int = 0,
) -> TreeEnsemble:
    """Bootstrap-aggregated trees with per-split feature subsampling."""
    X, y = check_design(X, y)
    if n_trees < 1:
        raise DataError("n_trees must be >= 1")
    seeds = np.random.SeedSequence(seed).spawn(n_trees)
    trees = []
    n = X.shape[0]
    for s in seeds:
        rng = np.random.default_rng(s)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        tree = cart_fit(
            X[rows], y[rows], max_depth, min_samples_leaf, rng=rng, feature_fraction=feature_fraction
        )
        trees.append(tree)
    return TreeEnsemble(
        "forest", trees, X.shape[1], feature_fraction=feature_fraction, bootstrap=bootstrap
    )


def gbm_fit(
    X,
    y,
    n_trees: int = 200,
    learning_rate: float = 0.05,
    max_depth: int | None = 3,
    min_samples_leaf: int = 2,
    seed: int = 0,
) -> TreeEnsemble:
    """Stage-wise boosting: each shallow tree fits the current residuals."""
    X, y = check_design(X, y)
    if not 0 < learning_rate <= 1:
        raise DataError("learning rate must lie in (0, 1]")
    if n_trees < 1:
        raise DataError("n_trees must be >= 1")
    base = float(y.mean())
    resid = y - base
    trees = []
    for _ in range(n_trees):
        tree = cart_fit(X, resid, max_depth, min_samples_leaf)
        resid = resid - learning_rate * tree.predict(X)
        trees.append(tree)
    return TreeEnsemble("boosted", trees, X.shape[1], learning_rate=learning_rate, base_prediction=base)


def ensemble_predict(model: RegressionTree | TreeEnsemble, X) -> np.ndarray:
    X = check_design(X)
    if X.shape[1] != model.n_features:
        raise SchemaError(f"feature count mismatch: model expects {model.n_features}, got {X.shape[1]}")
    return model.predict(X)


class CartRegressor(BaseEstimator, RegressorMixin):
    def __init__(self, max_depth: int | None = None, min_samples_leaf: int = 1):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y):
        self.model_ = cart_fit(X, y, self.max_depth, self.min_samples_leaf)
        self.n_features_in_ = self.model_.n_features
        return self

    def predict(self, X):
        X = check_design(X)
        check_feature_count(X, self.n_features_in_)
        return self.model_.predict(X)


class ForestRegressor(BaseEstimator, RegressorMixin):
    def __init__(
        self,
        n_trees: int = 500,
        feature_fraction: float = 1.0 / 3.0,
        max_depth: int | None = None,
        min_samples_leaf: int = 2,
        bootstrap: bool = True,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.feature_fraction = feature_fraction
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, X, y):
        self.model_ = forest_fit(
            X,
            y,
            n_trees=self.n_trees,
            feature_fraction=self.feature_fraction,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            bootstrap=self.bootstrap,
            seed=self.seed,
        )
        self.n_features_in_ = self.model_.n_features
        return self

    def predict(self, X):
        return ensemble_predict(self.model_, X)


class BoostedTreesRegressor(BaseEstimator, RegressorMixin):
    def __init__(
        self,
        n_trees: int = 200,
        learning_rate: float = 0.05,
        max_depth: int | None = 3,
        min_samples_leaf: int = 2,
        seed: int = 0,
    ):
        self.n_trees = n_trees
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.seed = seed

    def fit(self, X, y):
        self.model_ = gbm_fit(
            X,
            y,
            n_trees=self.n_trees,
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            min_samples_leaf=self.min_samples_leaf,
            seed=self.seed,
        )
        self.n_features_in_ = self.model_.n_features
        return self

    def predict(self, X):
        return ensemble_predict(self.model_, X)
