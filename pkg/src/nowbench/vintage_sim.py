"""Simulated data vintages.

A vintage is the dataset as it would have looked at a given publication month:
for each series, everything dated after (cutoff month - publication lag) is
masked out. Five vintages per target quarter are simulated, anchored to the
final month of the quarter: two months before it through two months after it
(a Q2 nowcast at offset -2 sees the world as of April).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .data_ingest import Panel, quarter, quarter_end_month
from .errors import DataError

VINTAGE_OFFSETS = (-2, -1, 0, 1, 2)


def _check_offset(offset: int) -> int:
    if offset not in VINTAGE_OFFSETS:
        raise DataError(f"vintage offset must be one of {VINTAGE_OFFSETS}, got {offset}")
    return int(offset)


@dataclass
class VintageView:
    """A panel masked down to what was observable at ``cutoff_month``."""

    panel: Panel
    target_quarter: pd.Period
    offset: int
    cutoff_month: pd.Period


def publication_cutoff(target_quarter, offset: int) -> pd.Period:
    """Publication month for a vintage: final month of the quarter plus the offset."""
    _check_offset(offset)
    return quarter_end_month(target_quarter) + int(offset)


def mask_vintage(panel: Panel, target_quarter, offset: int) -> VintageView:
    """Mask each column to its publication-lag horizon at the vintage cutoff.

    The target column is additionally masked from the target quarter onward:
    the quarter being nowcast is never observed, whatever the offset.
    """
    target_quarter = quarter(target_quarter)
    cutoff = publication_cutoff(target_quarter, offset)
    cal = panel.calendar
    if cal[0] > cutoff + 1:
        raise DataError(f"cutoff {cutoff} before panel calendar start {cal[0]}")
    frame = panel.frame.copy()
    for col in frame.columns:
        lag = panel.metas[col].publication_lag_months
        frame.loc[cal > cutoff - lag, col] = np.nan
    frame.loc[cal >= target_quarter.asfreq("M", how="start"), panel.target_id] = np.nan
    return VintageView(Panel(frame, dict(panel.metas)), target_quarter, _check_offset(offset), cutoff)


def vintage_grid(test_quarters) -> list[tuple[pd.Period, int]]:
    """Cartesian product of test quarters and the five offsets, quarter-major."""
    quarters = [quarter(q) for q in test_quarters]
    if not quarters:
        raise DataError("vintage grid needs at least one test quarter")
    return [(q, k) for q in quarters for k in VINTAGE_OFFSETS]


def last_observed_target_quarter(view: VintageView) -> pd.Period | None:
    """Most recent quarter whose target value is visible in the view."""
    tgt = view.panel.frame[view.panel.target_id]
    last = tgt.last_valid_index()
    return None if last is None else last.asfreq("Q")
