"""Synthetic growth-rate dataset with a known factor structure.

Ten monthly indicators load on a common AR(1) factor; quarterly GDP growth
aggregates the factor-driven latent monthly growth with the [1,2,3,2,1]/3
weights. One quarter in the test span carries a deep negative factor shock
(a stylized crisis). Two indicators start late to exercise the availability
filter and missing-history imputation. Everything is deterministic by seed.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .data_ingest import Panel, SeriesMeta, TimeSeries, build_panel, quarter

DEFAULT_START = "1985-01"
DEFAULT_MONTHS = 360  # 1985Q1 .. 2014Q4
DEFAULT_CRISIS = "2013Q2"

_LAGS = (1, 0, 1, 2, 1, 0, 1, 2, 1, 1)
_LATE_STARTS = {8: "1991-01", 9: "1996-01"}
_BLOCKS = {True: ("global", "real"), False: ("global", "soft")}


def synthetic_panel(
    seed: int = 0,
    n_indicators: int = 10,
    start: str = DEFAULT_START,
    n_months: int = DEFAULT_MONTHS,
    crisis_quarter: str = DEFAULT_CRISIS,
) -> Panel:
    """Generate the growth-rate panel (indicators monthly, target quarterly)."""
    rng = np.random.default_rng(seed)
    months = pd.period_range(start, periods=n_months, freq="M")

    f = np.zeros(n_months + 24)
    for t in range(1, len(f)):
        f[t] = 0.75 * f[t - 1] + rng.standard_normal()
    f = f[24:]
    crisis = quarter(crisis_quarter)
    in_crisis = months.asfreq("Q") == crisis
    f = np.where(in_crisis, f - 6.0, f)

    columns = []
    for i in range(n_indicators):
        lam = 0.6 + 0.08 * (i % 5)
        e = np.zeros(n_months)
        for t in range(1, n_months):
            e[t] = 0.3 * e[t - 1] + rng.standard_normal()
        x = 0.01 * (lam * f + 0.8 * e) + 0.002 * (i - n_indicators / 2) / n_indicators
        series = pd.Series(x, index=months)
        if i in _LATE_STARTS:
            series[months < pd.Period(_LATE_STARTS[i], freq="M")] = np.nan
        meta = SeriesMeta(
            id=f"ind{i}",
            source_code=f"SYN{i}",
            frequency="monthly",
            publication_lag_months=_LAGS[i % len(_LAGS)],
            start_date=_LATE_STARTS.get(i, start),
            blocks=_BLOCKS[i % 2 == 0],
        )
        columns.append(TimeSeries(meta, series))

    # latent monthly growth and its quarterly aggregate
    g = 0.0023 + 0.004 * (0.7 * f + 0.5 * rng.standard_normal(n_months))
    w = np.array([1.0, 2.0, 3.0, 2.0, 1.0]) / 3.0
    ends = months.asfreq("Q").asfreq("M", how="end")
    qvals = np.full(n_months, np.nan)
    for t in range(4, n_months):
        if months[t] == ends[t]:
            qvals[t] = w @ g[t - 4 : t + 1][::-1] + 0.001 * rng.standard_normal()
    meta_gdp = SeriesMeta(
        id="gdp",
        source_code="SYNGDP",
        frequency="quarterly",
        publication_lag_months=1,
        start_date=start,
        is_target=True,
        blocks=("global", "real"),
    )
    columns.append(TimeSeries(meta_gdp, pd.Series(qvals, index=months)))
    return build_panel(columns)


def synthetic_period() -> dict:
    """Default split for the synthetic benchmark (12 test quarters)."""
    return {
        "train_end": "2011Q4",
        "valid_start": "2006Q1",
        "valid_end": "2011Q4",
        "test_start": "2012Q1",
        "test_end": "2014Q4",
        "availability_cutoff": "1995Q4",
    }
