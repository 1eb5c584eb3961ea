"""Exception types shared across the package."""

from __future__ import annotations


class NowbenchError(Exception):
    """Base class for all package-specific errors."""


class DataError(NowbenchError):
    """Malformed or inconsistent input data (duplicate ids, empty splits...)."""


class UnknownSeriesError(DataError):
    """The data provider does not recognize a requested series code."""


class CacheError(DataError):
    """A cache file is missing or cannot be parsed, and no network fallback exists."""


class SchemaError(NowbenchError):
    """A hyperparameter name or feature schema does not match the backend."""


class EstimationError(NowbenchError):
    """A model backend failed to estimate.

    Carries the methodology id so harness-level error reports stay readable.
    """

    def __init__(self, message: str, methodology: str | None = None):
        self.methodology = methodology
        if methodology:
            message = f"[{methodology}] {message}"
        super().__init__(message)


class NumericalError(EstimationError):
    """A numerical routine hit a non-recoverable condition (e.g. a covariance
    matrix that is not positive definite)."""
