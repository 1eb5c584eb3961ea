"""Metric machinery: ratio tables, revision tables, and the aggregate score.

Accuracy is reported relative to the ARMA benchmark (ratio of MAE or RMSE per
vintage offset, plus an Average row over the five offsets). Revisions are the
mean absolute change in a methodology's nowcast between adjacent vintages,
in percentage points. The aggregate score min-max scales the per-period
accuracy figures and the revision figures to [0, 1] and averages the four
resulting numbers per methodology (lower is better).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .data_ingest import quarter
from .errors import DataError
from .vintage_sim import VINTAGE_OFFSETS

VINTAGE_LABELS = {
    -2: "2 months before",
    -1: "1 month before",
    0: "month of",
    1: "1 month after",
    2: "2 months after",
}

CUBE_HEADER = ["methodology", "period", "quarter", "offset", "value"]


@dataclass
class PredictionCube:
    """Nowcasts keyed by (methodology, period, quarter, offset) plus actuals."""

    records: dict[tuple[str, str, str, int], float] = field(default_factory=dict)
    actuals: dict[str, float] = field(default_factory=dict)

    def add(self, methodology: str, period: str, q, offset: int, value: float) -> None:
        key = (methodology, period, str(quarter(q)), int(offset))
        if key in self.records and self.records[key] != value:
            raise DataError(f"conflicting duplicate record for {key}")
        self.records[key] = float(value)

    def set_actual(self, q, value: float) -> None:
        self.actuals[str(quarter(q))] = float(value)

    def methodologies(self) -> list[str]:
        return sorted({k[0] for k in self.records})

    def periods(self) -> list[str]:
        return sorted({k[1] for k in self.records})

    def quarters(self, period: str) -> list[str]:
        qs = {k[2] for k in self.records if k[1] == period}
        return sorted(qs, key=lambda s: quarter(s))

    def has(self, methodology: str, period: str, q, offset: int) -> bool:
        return (methodology, period, str(quarter(q)), int(offset)) in self.records

    def value(self, methodology: str, period: str, q, offset: int) -> float:
        key = (methodology, period, str(quarter(q)), int(offset))
        if key not in self.records:
            raise DataError(f"missing cube cell {key}")
        return self.records[key]

    def errors(self, methodology: str, period: str, offset: int) -> np.ndarray:
        """Prediction errors across the period's quarters at one offset."""
        out = []
        for qs in self.quarters(period):
            if qs not in self.actuals:
                raise DataError(f"no actual value for quarter {qs}")
            out.append(self.value(methodology, period, qs, offset) - self.actuals[qs])
        return np.asarray(out)

    def validate(self) -> None:
        for key in self.records:
            if key[2] not in self.actuals:
                raise DataError(f"record {key} has no matching actual")


def save_cube_records(path, records) -> None:
    rows = [[r.methodology, r.period, str(r.quarter), int(r.offset), f"{r.value:.12g}"] for r in records]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CUBE_HEADER)
        writer.writerows(rows)


def load_cube(path, actuals: dict[str, float] | None = None) -> PredictionCube:
    cube = PredictionCube(actuals=dict(actuals or {}))
    with open(path, newline="") as fh:
        rows = list(csv.reader(r for r in fh if not r.startswith("#")))
    if not rows or rows[0] != CUBE_HEADER:
        raise DataError(f"unexpected cube header in {path}: {rows[:1]}")
    for methodology, period, q, offset, value in rows[1:]:
        cube.add(methodology, period, q, int(offset), float(value))
    return cube


# ---------------------------------------------------------------------------
# point metrics


def mae(preds, actuals) -> float:
    p = np.asarray(preds, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape or p.size == 0:
        raise DataError(f"mae needs equal non-empty lengths, got {p.shape} vs {a.shape}")
    return float(np.abs(p - a).mean())


def rmse(preds, actuals) -> float:
    p = np.asarray(preds, dtype=float)
    a = np.asarray(actuals, dtype=float)
    if p.shape != a.shape or p.size == 0:
        raise DataError(f"rmse needs equal non-empty lengths, got {p.shape} vs {a.shape}")
    return float(np.sqrt(((p - a) ** 2).mean()))


def _metric_fn(metric: str):
    if metric not in ("mae", "rmse"):
        raise DataError(f"unknown metric {metric!r}")
    return mae if metric == "mae" else rmse


def raw_metric(cube: PredictionCube, methodology: str, period: str, offset: int, metric: str) -> float:
    e = cube.errors(methodology, period, offset)
    return float(np.abs(e).mean()) if metric == "mae" else float(np.sqrt((e**2).mean()))


def ratio_table(cube: PredictionCube, period: str, metric: str = "mae") -> pd.DataFrame:
    """Vintage x methodology table of metric ratios to the ARMA benchmark,
    with an Average row (arithmetic mean of the five offset ratios)."""
    _metric_fn(metric)
    methods = cube.methodologies()
    if "arma" not in methods:
        raise DataError("ratio tables need the arma benchmark in the cube")
    rows = {}
    for k in VINTAGE_OFFSETS:
        bench = raw_metric(cube, "arma", period, k, metric)
        if bench == 0.0:
            raise DataError(f"ARMA {metric} is zero at offset {k}; ratios undefined")
        rows[VINTAGE_LABELS[k]] = {m: raw_metric(cube, m, period, k, metric) / bench for m in methods}
    table = pd.DataFrame.from_dict(rows, orient="index")[methods]
    table.loc["Average"] = table.mean(axis=0)
    return table


def avg_revision(cube: PredictionCube, period: str) -> dict[str, float]:
    """Mean absolute nowcast change between adjacent vintages, in percentage points."""
    out = {}
    for m in cube.methodologies():
        diffs = []
        for qs in cube.quarters(period):
            preds = [cube.value(m, period, qs, k) for k in VINTAGE_OFFSETS]
            diffs.extend(abs(preds[i + 1] - preds[i]) for i in range(len(preds) - 1))
        if not diffs:
            raise DataError(f"no records for {m} in period {period}")
        out[m] = float(np.mean(diffs)) * 100.0
    return out


def minmax_scale(values: dict[str, float]) -> dict[str, float]:
    """(x - min) / (max - min); an all-equal input maps to all zeros."""
    if len(values) < 2:
        raise DataError("min-max scaling needs at least two entries")
    lo = min(values.values())
    hi = max(values.values())
    if hi == lo:
        return {k: 0.0 for k in values}
    return {k: (v - lo) / (hi - lo) for k, v in values.items()}


def aggregate_from_period_figures(
    period_accuracy: dict[str, dict[str, float]],
    period_revisions: dict[str, dict[str, float]],
) -> dict[str, float]:
    """Aggregate score from one accuracy figure and one revision figure per
    (period, methodology): min-max scale each period column, average the
    scaled revision columns into one figure, then average everything."""
    periods = sorted(period_accuracy)
    if not periods or sorted(period_revisions) != periods:
        raise DataError("accuracy and revision figures must cover the same periods")
    methods = sorted(period_accuracy[periods[0]])
    scaled_acc = {p: minmax_scale(period_accuracy[p]) for p in periods}
    scaled_rev = {p: minmax_scale(period_revisions[p]) for p in periods}
    out = {}
    for m in methods:
        figures = [scaled_acc[p][m] for p in periods]
        figures.append(float(np.mean([scaled_rev[p][m] for p in periods])))
        out[m] = float(np.mean(figures))
    return out


def aggregate_score(cube: PredictionCube) -> dict[str, float]:
    """Overall score per methodology across the cube's periods (lower is better).

    Per period: raw MAE and RMSE are each averaged over the five offsets, the
    two averages are averaged into one accuracy figure. Accuracy figures and
    revision figures are min-max scaled within each period and combined per
    :func:`aggregate_from_period_figures`.
    """
    periods = cube.periods()
    if not periods:
        raise DataError("empty prediction cube")
    accuracy, revisions = {}, {}
    for p in periods:
        acc = {}
        for m in cube.methodologies():
            mean_mae = np.mean([raw_metric(cube, m, p, k, "mae") for k in VINTAGE_OFFSETS])
            mean_rmse = np.mean([raw_metric(cube, m, p, k, "rmse") for k in VINTAGE_OFFSETS])
            acc[m] = 0.5 * (mean_mae + mean_rmse)
        accuracy[p] = acc
        revisions[p] = avg_revision(cube, p)
    return aggregate_from_period_figures(accuracy, revisions)


def rank_methodologies(scores: dict[str, float]) -> list[str]:
    """Best (lowest score) first; ties broken alphabetically for stability."""
    return [m for m, _ in sorted(scores.items(), key=lambda kv: (kv[1], kv[0]))]


# ---------------------------------------------------------------------------
# published reference tables (regression fixture)


def load_reference_tables(path=None) -> pd.DataFrame:
    """Columns: period, table (mae_ratio|rmse_ratio|revision), vintage, methodology, value."""
    if path is None:
        from importlib.resources import files

        path = files("nowbench.resources") / "reference_tables.csv"
    frame = pd.read_csv(str(path), dtype={"vintage": str}, keep_default_na=False)
    frame["value"] = frame["value"].astype(float)
    return frame


def reference_aggregate_scores(tables: pd.DataFrame | None = None) -> dict[str, float]:
    """Aggregate score computed from the published ratio/revision tables,
    using the per-period Average ratio rows as the accuracy figures."""
    if tables is None:
        tables = load_reference_tables()
    acc: dict[str, dict[str, float]] = {}
    rev: dict[str, dict[str, float]] = {}
    for period in sorted(tables["period"].unique()):
        sub = tables[tables["period"] == period]
        avg_rows = sub[(sub["vintage"] == "average")]
        m_mae = avg_rows[avg_rows["table"] == "mae_ratio"].set_index("methodology")["value"]
        m_rmse = avg_rows[avg_rows["table"] == "rmse_ratio"].set_index("methodology")["value"]
        acc[period] = {m: 0.5 * (m_mae[m] + m_rmse[m]) for m in m_mae.index}
        r = sub[sub["table"] == "revision"].set_index("methodology")["value"]
        rev[period] = {m: float(r[m]) for m in r.index}
    return aggregate_from_period_figures(acc, rev)
