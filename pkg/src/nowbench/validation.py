"""Small input-validation helpers shared by the estimator classes."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .errors import SchemaError


def check_design(X, y=None):
    """Validate a design matrix (and target) as dense finite 2-d float data."""
    if y is None:
        return check_array(X, dtype=np.float64, ensure_2d=True)
    return check_X_y(X, y, dtype=np.float64, y_numeric=True)


def check_feature_count(X: np.ndarray, expected: int):
    if X.shape[1] != expected:
        raise SchemaError(f"feature count mismatch: model expects {expected}, got {X.shape[1]}")


def check_params(params: dict, schema: dict, context: str):
    """Reject hyperparameter names the backend does not know."""
    unknown = sorted(set(params) - set(schema))
    if unknown:
        raise SchemaError(f"{context}: unknown hyperparameters {unknown}; valid names: {sorted(schema)}")
