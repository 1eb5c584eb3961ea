import numpy as np
import pandas as pd
import pytest

from nowbench.data_ingest import Panel, SeriesMeta, TimeSeries, build_panel


def monthly_series(series_id, start, values, lag=0, blocks=("global",), **meta_kw):
    months = pd.period_range(start, periods=len(values), freq="M")
    meta = SeriesMeta(
        id=series_id,
        source_code=series_id.upper(),
        frequency="monthly",
        publication_lag_months=lag,
        start_date=start,
        blocks=tuple(blocks),
        **meta_kw,
    )
    return TimeSeries(meta, pd.Series(values, index=months, dtype=float))


def quarterly_series(series_id, start_quarter, values, lag=0, is_target=False, blocks=("global",)):
    quarters = pd.period_range(start_quarter, periods=len(values), freq="Q")
    months = quarters.asfreq("M", how="end")
    meta = SeriesMeta(
        id=series_id,
        source_code=series_id.upper(),
        frequency="quarterly",
        publication_lag_months=lag,
        start_date=str(months[0]),
        is_target=is_target,
        blocks=tuple(blocks),
    )
    return TimeSeries(meta, pd.Series(values, index=months, dtype=float))


def simple_panel(n_months=120, n_monthly=3, seed=0, lags=(0, 1, 2), start="2000-01"):
    """Small mixed-frequency panel: n_monthly indicators plus a quarterly target."""
    rng = np.random.default_rng(seed)
    cols = [
        monthly_series(f"m{i}", start, rng.standard_normal(n_months) * 0.01, lag=lags[i % len(lags)])
        for i in range(n_monthly)
    ]
    n_q = n_months // 3
    q_start = pd.Period(start, freq="M").asfreq("Q")
    cols.append(
        quarterly_series("gdp", str(q_start), rng.standard_normal(n_q) * 0.01, lag=1, is_target=True)
    )
    return build_panel(cols)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_panel():
    return simple_panel()
