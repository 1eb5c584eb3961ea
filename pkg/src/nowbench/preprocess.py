"""Imputation, mixed-frequency restructuring, standardization, design matrices.

Missing history and ragged edges are filled with per-column means computed on
a fit window (training span by default, so nothing fitted ever sees test
data), or optionally with univariate ARMA forecasts for the ragged edge.
Monthly series are stacked into three quarterly series; frequency-naive models
then see one row per quarter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import arma
from .data_ingest import Panel, SeriesMeta, TimeSeries, quarter, quarter_end_month
from .errors import DataError, EstimationError
from .vintage_sim import VintageView

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImputePolicy:
    """How to fill missing cells; statistics come from ``fit_window`` only."""

    strategy: str = "mean_fill"  # "mean_fill" | "arma_fill"
    fit_window: tuple[pd.Period, pd.Period] | None = None  # quarter range, None = whole panel

    def __post_init__(self):
        if self.strategy not in ("mean_fill", "arma_fill"):
            raise DataError(f"unknown imputation strategy {self.strategy!r}")
        if self.fit_window is not None:
            object.__setattr__(
                self, "fit_window", (quarter(self.fit_window[0]), quarter(self.fit_window[1]))
            )


def _column_grid(panel: Panel, col: str) -> pd.PeriodIndex:
    """The months on which a column actually carries observations."""
    cal = panel.calendar
    if panel.metas[col].frequency == "quarterly":
        mask = cal == cal.asfreq("Q").asfreq("M", how="end")
        return cal[mask]
    return cal


def _window_months(panel: Panel, window: tuple[pd.Period, pd.Period] | None) -> pd.PeriodIndex:
    cal = panel.calendar
    if window is None:
        return cal
    lo = quarter(window[0]).asfreq("M", how="start")
    hi = quarter_end_month(window[1])
    return cal[(cal >= lo) & (cal <= hi)]


def fit_window_means(panel: Panel, window: tuple[pd.Period, pd.Period] | None) -> pd.Series:
    """Per-column means over the fit window (quarter-end cells for quarterly columns)."""
    months = _window_months(panel, window)
    means = {}
    for col in panel.ids:
        grid = _column_grid(panel, col)
        cells = panel.frame.loc[grid.intersection(months), col]
        if cells.notna().sum() == 0:
            raise DataError(f"column {col!r} has no observations inside the imputation fit window")
        means[col] = float(cells.mean())
    return pd.Series(means)


def mean_fill(panel: Panel, policy: ImputePolicy, *, means: pd.Series | None = None) -> Panel:
    """Replace every missing cell by the column's fit-window mean.

    Quarterly columns are only filled on quarter-end months; the off-grid
    cells stay missing (they are structural, not unobserved values).
    """
    if means is None:
        means = fit_window_means(panel, policy.fit_window)
    frame = panel.frame.copy()
    for col in panel.ids:
        grid = _column_grid(panel, col)
        vals = frame.loc[grid, col]
        frame.loc[grid, col] = vals.fillna(means[col])
    return Panel(frame, dict(panel.metas))


def arma_fill(
    panel: Panel,
    fit_window: tuple[pd.Period, pd.Period] | None = None,
    *,
    p_max: int = 2,
    q_max: int = 2,
) -> Panel:
    """Fill ragged edges with h-step ARMA forecasts per column.

    Interior and leading gaps are still mean-filled; a column whose ARMA
    estimation fails (or is too short, under 20 observations) falls back to
    mean filling with a logged warning.
    """
    means = fit_window_means(panel, fit_window)
    frame = panel.frame.copy()
    for col in panel.ids:
        grid = _column_grid(panel, col)
        vals = frame.loc[grid, col].copy()
        last = vals.last_valid_index()
        first = vals.first_valid_index()
        # leading and interior gaps: mean
        upto = vals.loc[:last] if last is not None else vals
        vals.loc[:last] = upto.fillna(means[col])
        trailing = vals.loc[vals.index > last] if last is not None else vals.iloc[0:0]
        h = int(trailing.isna().sum())
        if h > 0:
            history = vals.loc[first:last].to_numpy(dtype=float)
            try:
                if len(history) < 20:
                    raise EstimationError(f"{col}: only {len(history)} observations")
                p, q = arma.auto_order(history, p_max, q_max)
                model = arma.fit_arma(history, p, q)
                fills = arma.forecast(model, history, h)
            except EstimationError as exc:
                log.warning("arma_fill: %s falls back to mean fill (%s)", col, exc)
                fills = np.full(h, means[col])
            vals.loc[vals.index > last] = fills
        frame.loc[grid, col] = vals
    return Panel(frame, dict(panel.metas))


def impute(panel: Panel, policy: ImputePolicy, *, means: pd.Series | None = None) -> Panel:
    if policy.strategy == "mean_fill":
        return mean_fill(panel, policy, means=means)
    return arma_fill(panel, policy.fit_window)


# ---------------------------------------------------------------------------
# mixed-frequency restructuring


def stack_monthly(series: TimeSeries) -> tuple[TimeSeries, TimeSeries, TimeSeries]:
    """Split a monthly series into three quarterly series (month 1, 2, 3 of each quarter)."""
    if series.meta.frequency != "monthly":
        raise DataError(f"{series.meta.id}: stacking needs a monthly series")
    vals = series.values
    quarters = pd.PeriodIndex(sorted(set(vals.index.asfreq("Q"))), freq=vals.index.asfreq("Q").freqstr)
    ends = quarters.asfreq("M", how="end")
    out = []
    for pos in (1, 2, 3):
        months = quarters.asfreq("M", how="start") + (pos - 1)
        picked = vals.reindex(months)
        meta = SeriesMeta(
            id=f"{series.meta.id}__m{pos}",
            source_code=series.meta.source_code,
            frequency="quarterly",
            publication_lag_months=series.meta.publication_lag_months,
            start_date=series.meta.start_date,
            is_target=False,
            blocks=series.meta.blocks,
        )
        out.append(TimeSeries(meta, pd.Series(picked.values, index=ends)))
    return out[0], out[1], out[2]


def unstack_monthly(m1: TimeSeries, m2: TimeSeries, m3: TimeSeries) -> pd.Series:
    """Interleave three stacked quarterly series back to one monthly series (test oracle)."""
    quarters = m1.values.index.asfreq("Q")
    months, values = [], []
    for i, q in enumerate(quarters):
        start = q.asfreq("M", how="start")
        for pos, src in enumerate((m1, m2, m3)):
            months.append(start + pos)
            values.append(src.values.iloc[i])
    return pd.Series(values, index=pd.PeriodIndex(months, freq="M"))


def aggregate_quarterly(series: TimeSeries, mode: str = "compound_growth") -> TimeSeries:
    """Aggregate monthly growth rates to quarterly: constituent-month mean, or
    the compounded full-quarter rate. Any missing month voids the quarter."""
    if mode not in ("mean_growth", "compound_growth"):
        raise DataError(f"unknown aggregation mode {mode!r}")
    m1, m2, m3 = stack_monthly(series)
    g1, g2, g3 = (m.values.to_numpy(dtype=float) for m in (m1, m2, m3))
    if mode == "mean_growth":
        agg = (g1 + g2 + g3) / 3.0
    else:
        agg = (1.0 + g1) * (1.0 + g2) * (1.0 + g3) - 1.0
    meta = SeriesMeta(
        id=f"{series.meta.id}__q",
        source_code=series.meta.source_code,
        frequency="quarterly",
        publication_lag_months=series.meta.publication_lag_months,
        start_date=series.meta.start_date,
        is_target=series.meta.is_target,
        blocks=series.meta.blocks,
    )
    return TimeSeries(meta, pd.Series(agg, index=m1.values.index))


# ---------------------------------------------------------------------------
# standardization


class PanelScaler:
    """Column-wise z-scoring with statistics frozen at fit time.

    The inverse transform is available per column so target predictions can be
    mapped back to growth rates.
    """

    def __init__(self, fit_window: tuple[pd.Period, pd.Period] | None = None):
        self.fit_window = fit_window
        self.means_: pd.Series | None = None
        self.stds_: pd.Series | None = None

    def fit(self, panel: Panel) -> "PanelScaler":
        months = _window_months(panel, self.fit_window)
        means, stds = {}, {}
        for col in panel.ids:
            grid = _column_grid(panel, col)
            cells = panel.frame.loc[grid.intersection(months), col].dropna()
            if cells.empty:
                raise DataError(f"column {col!r} has no observations inside the scaler fit window")
            mu = float(cells.mean())
            sd = float(cells.std(ddof=0))
            if sd <= 0.0:
                raise DataError(f"column {col!r} has zero variance inside the fit window")
            means[col], stds[col] = mu, sd
        self.means_ = pd.Series(means)
        self.stds_ = pd.Series(stds)
        return self

    def _check_fitted(self):
        if self.means_ is None:
            raise DataError("scaler used before fit")

    def transform(self, panel: Panel) -> Panel:
        self._check_fitted()
        frame = panel.frame.copy()
        for col in panel.ids:
            frame[col] = (frame[col] - self.means_[col]) / self.stds_[col]
        return Panel(frame, dict(panel.metas))

    def transform_values(self, col: str, values):
        self._check_fitted()
        return (np.asarray(values, dtype=float) - self.means_[col]) / self.stds_[col]

    def inverse_transform_values(self, col: str, values):
        self._check_fitted()
        return np.asarray(values, dtype=float) * self.stds_[col] + self.means_[col]


def standardize(panel: Panel, fit_window=None) -> tuple[Panel, PanelScaler]:
    scaler = PanelScaler(fit_window).fit(panel)
    return scaler.transform(panel), scaler


# ---------------------------------------------------------------------------
# design matrices


@dataclass
class DesignMatrix:
    """One row per quarter: stacked features (plus lags), target column last."""

    X: np.ndarray
    y: np.ndarray  # NaN where the target is not observed (e.g. the nowcast row)
    feature_names: list[str]
    quarters: pd.PeriodIndex
    target_name: str

    def row_for(self, q) -> np.ndarray:
        q = quarter(q)
        pos = self.quarters.get_loc(q)
        return self.X[pos]

    def training_rows(self, last_quarter=None) -> tuple[np.ndarray, np.ndarray]:
        """Rows with an observed target, optionally restricted to quarters <= last_quarter."""
        keep = ~np.isnan(self.y)
        if last_quarter is not None:
            keep &= np.asarray(self.quarters <= quarter(last_quarter))
        return self.X[keep], self.y[keep]


def quarterly_frame(panel: Panel) -> pd.DataFrame:
    """Quarters x columns view of a panel: monthly series stacked into three
    columns, quarterly series on their own column. No imputation here."""
    quarters = panel.quarters()
    out = pd.DataFrame(index=quarters)
    cal = panel.calendar
    for col in panel.ids:
        meta = panel.metas[col]
        if meta.frequency == "monthly":
            for pos in (1, 2, 3):
                months = quarters.asfreq("M", how="start") + (pos - 1)
                out[f"{col}__m{pos}"] = panel.frame[col].reindex(months).to_numpy()
        else:
            ends = quarters.asfreq("M", how="end")
            out[col] = panel.frame[col].reindex(ends.intersection(cal)).reindex(ends).to_numpy()
    return out


class DesignMatrixBuilder:
    """Mask -> impute -> stack -> lag pipeline with statistics frozen at fit.

    Fit on the training panel; transform masked vintage views at predict time
    using the same imputation means so vintages never shift the statistics.
    """

    def __init__(self, policy: ImputePolicy, n_lags: int = 1):
        if n_lags < 0:
            raise DataError("n_lags must be non-negative")
        self.policy = policy
        self.n_lags = n_lags
        self.impute_means_: pd.Series | None = None
        self.feature_names_: list[str] | None = None

    def fit(self, panel: Panel) -> "DesignMatrixBuilder":
        self.impute_means_ = fit_window_means(panel, self.policy.fit_window)
        return self

    def transform(self, panel: Panel) -> DesignMatrix:
        if self.impute_means_ is None:
            raise DataError("builder used before fit")
        if self.policy.strategy == "arma_fill":
            filled = arma_fill(panel, self.policy.fit_window)
        else:
            filled = mean_fill(panel, self.policy, means=self.impute_means_)
        target = panel.target_id
        qf = quarterly_frame(filled)
        y = qf[target].copy()
        features = qf.drop(columns=[target])
        blocks = [features]
        for k in range(1, self.n_lags + 1):
            lagged = features.shift(k)
            lagged.columns = [f"{c}__lag{k}" for c in features.columns]
            blocks.append(lagged)
            tl = y.shift(k).to_frame(name=f"{target}__lag{k}")
            # lagged target cells unknown at this vintage get the fill mean too
            tl = tl.fillna(self.impute_means_[target])
            blocks.append(tl)
        full = pd.concat(blocks, axis=1)
        complete = full.notna().all(axis=1)
        full = full.loc[complete]
        names = list(full.columns)
        if self.feature_names_ is None:
            self.feature_names_ = names
        elif names != self.feature_names_:
            raise DataError("feature schema changed between fit and transform")
        return DesignMatrix(
            X=full.to_numpy(dtype=float),
            y=y.loc[complete].to_numpy(dtype=float),
            feature_names=names,
            quarters=pd.PeriodIndex(full.index, freq=qf.index.freqstr),
            target_name=target,
        )


def build_design_matrix(view: VintageView | Panel, policy: ImputePolicy, n_lags: int = 1) -> DesignMatrix:
    """One-shot design matrix for a vintage view (or a raw panel at train time)."""
    panel = view.panel if isinstance(view, VintageView) else view
    return DesignMatrixBuilder(policy, n_lags).fit(panel).transform(panel)
