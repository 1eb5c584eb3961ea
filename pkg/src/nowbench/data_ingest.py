"""Fetching, caching, transforming and splitting the series that feed the benchmark.

Series are monthly or quarterly macro indicators pulled from the FRED API (or
read back from a local CSV cache so offline runs never touch the network).
Everything downstream works on a :class:`Panel`: all series aligned to one
monthly calendar, quarterly values sitting in quarter-end months.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .errors import CacheError, DataError, UnknownSeriesError

log = logging.getLogger(__name__)

FRED_API_URL = "https://api.stlouisfed.org/fred"

# one provider request at a time, politely spaced
_FETCH_LOCK = threading.Lock()
_MIN_REQUEST_INTERVAL = 0.25
_last_request_at = 0.0


def month(value) -> pd.Period:
    """Coerce to a monthly pandas Period."""
    if isinstance(value, pd.Period):
        return value.asfreq("M") if value.freqstr != "M" else value
    return pd.Period(value, freq="M")


def quarter(value) -> pd.Period:
    """Coerce to a quarterly pandas Period."""
    if isinstance(value, pd.Period):
        return value.asfreq("Q") if not value.freqstr.startswith("Q") else value
    return pd.Period(value, freq="Q")


def quarter_end_month(q) -> pd.Period:
    return quarter(q).asfreq("M", how="end")


@dataclass(frozen=True)
class SeriesMeta:
    """Descriptive metadata for one series.

    ``publication_lag_months`` follows the convention: in month m, the latest
    observation available is for month m - lag.
    """

    id: str
    source_code: str
    frequency: str  # "monthly" | "quarterly"
    publication_lag_months: int = 0
    start_date: pd.Period | None = None
    is_target: bool = False
    blocks: tuple[str, ...] = ("global",)

    def __post_init__(self):
        if self.frequency not in ("monthly", "quarterly"):
            raise DataError(f"{self.id}: frequency must be monthly or quarterly, got {self.frequency!r}")
        if self.publication_lag_months < 0:
            raise DataError(f"{self.id}: publication lag must be non-negative")
        if self.start_date is not None:
            object.__setattr__(self, "start_date", month(self.start_date))


@dataclass
class TimeSeries:
    """One series on a monthly calendar; quarterly series occupy quarter-end months."""

    meta: SeriesMeta
    values: pd.Series  # PeriodIndex (freq M), NaN = missing

    def __post_init__(self):
        idx = self.values.index
        if not isinstance(idx, pd.PeriodIndex) or idx.freqstr != "M":
            raise DataError(f"{self.meta.id}: values must be indexed by monthly periods")
        if not idx.is_monotonic_increasing or idx.has_duplicates:
            raise DataError(f"{self.meta.id}: months must be strictly increasing")
        if self.meta.frequency == "quarterly":
            off_end = [m for m in idx[self.values.notna()] if m != quarter_end_month(m)]
            if off_end:
                raise DataError(f"{self.meta.id}: quarterly values outside quarter-end months: {off_end[:3]}")

    def first_observed(self) -> pd.Period | None:
        m = self.values.first_valid_index()
        return None if m is None else m


@dataclass
class Panel:
    """Series aligned to a shared monthly calendar.

    ``frame`` holds one column per series id; ``metas`` keeps the per-series
    metadata needed for masking, growth and stacking decisions.
    """

    frame: pd.DataFrame
    metas: dict[str, SeriesMeta]

    def __post_init__(self):
        idx = self.frame.index
        if not isinstance(idx, pd.PeriodIndex) or idx.freqstr != "M":
            raise DataError("panel calendar must be a monthly PeriodIndex")
        missing = [c for c in self.frame.columns if c not in self.metas]
        if missing:
            raise DataError(f"panel columns without metadata: {missing}")
        targets = [c for c in self.frame.columns if self.metas[c].is_target]
        if len(targets) != 1:
            raise DataError(f"panel must contain exactly one target column, found {targets}")

    @property
    def calendar(self) -> pd.PeriodIndex:
        return self.frame.index

    @property
    def target_id(self) -> str:
        return next(c for c in self.frame.columns if self.metas[c].is_target)

    @property
    def ids(self) -> list[str]:
        return list(self.frame.columns)

    def meta(self, series_id: str) -> SeriesMeta:
        return self.metas[series_id]

    def copy(self) -> "Panel":
        return Panel(self.frame.copy(), dict(self.metas))

    def column(self, series_id: str) -> TimeSeries:
        return TimeSeries(self.metas[series_id], self.frame[series_id].copy())

    def quarters(self) -> pd.PeriodIndex:
        return pd.PeriodIndex(sorted(set(self.calendar.asfreq("Q"))), freq=self.calendar.asfreq("Q").freqstr)

    def slice_months(self, start: pd.Period | None, end: pd.Period | None) -> "Panel":
        idx = self.calendar
        lo = idx[0] if start is None else month(start)
        hi = idx[-1] if end is None else month(end)
        sub = self.frame.loc[(idx >= lo) & (idx <= hi)]
        if sub.empty:
            raise DataError(f"empty panel slice {lo}..{hi}")
        return Panel(sub.copy(), dict(self.metas))

    def slice_quarters(self, start, end) -> "Panel":
        return self.slice_months(quarter(start).asfreq("M", how="start"), quarter_end_month(end))

    def target_growth(self) -> pd.Series:
        """Quarterly target values indexed by quarter."""
        col = self.frame[self.target_id]
        ends = self.calendar.asfreq("Q").asfreq("M", how="end")
        vals = col[self.calendar == ends]
        vals.index = vals.index.asfreq("Q")
        return vals


@dataclass(frozen=True)
class SplitSpec:
    """Quarter boundaries for train / validation / test.

    The validation range sits inside the training span: the final refit uses
    data through ``train_end`` including validation quarters.
    """

    train_end: pd.Period
    valid_start: pd.Period
    valid_end: pd.Period
    test_start: pd.Period
    test_end: pd.Period

    def __post_init__(self):
        for name in ("train_end", "valid_start", "valid_end", "test_start", "test_end"):
            object.__setattr__(self, name, quarter(getattr(self, name)))
        ordered = (
            self.valid_start <= self.valid_end < self.test_start <= self.test_end
            and self.train_end < self.test_start
            and self.valid_end <= self.train_end
        )
        if not ordered:
            raise DataError(f"inconsistent split boundaries: {self}")

    def test_quarters(self) -> list[pd.Period]:
        return list(pd.period_range(self.test_start, self.test_end, freq=self.test_start.freqstr))

    def valid_quarters(self) -> list[pd.Period]:
        return list(pd.period_range(self.valid_start, self.valid_end, freq=self.valid_start.freqstr))


# ---------------------------------------------------------------------------
# transformations


def to_growth(series: TimeSeries) -> TimeSeries:
    """Period-over-period growth rates: g_t = x_t / x_{t-1} - 1.

    Works on the series' own frequency (quarter over quarter for quarterly
    series). The first observation becomes missing; a missing level knocks out
    the growth rate on both adjacent periods.
    """
    vals = series.values
    if series.meta.frequency == "quarterly":
        ends = vals.index.asfreq("Q").asfreq("M", how="end")
        levels = vals[vals.index == ends]
        periods = levels.index.asfreq("Q")
    else:
        levels = vals
        periods = levels.index
    # reindex to a gapless grid so growth only links truly consecutive periods
    full = pd.period_range(periods[0], periods[-1], freq=periods.freqstr)
    x = pd.Series(levels.values, index=periods, dtype=float).reindex(full)
    base = x.shift(1)
    used_zero = (base == 0) & x.notna()
    if used_zero.any():
        raise DataError(f"{series.meta.id}: zero base level at {list(x.index[used_zero])[:3]}")
    g = x / base - 1.0
    if series.meta.frequency == "quarterly":
        out = pd.Series(g.values, index=full.asfreq("M", how="end"))
    else:
        out = g.copy()
        out.index = full
    return TimeSeries(series.meta, out)


def compound_levels(growth: TimeSeries, first_level: float) -> pd.Series:
    """Rebuild levels from growth rates by cumulative compounding (test oracle)."""
    g = growth.values.dropna()
    levels = [first_level]
    for v in g.values:
        levels.append(levels[-1] * (1.0 + v))
    return pd.Series(levels)


def build_panel(series: list[TimeSeries]) -> Panel:
    if not series:
        raise DataError("cannot build a panel from an empty series list")
    ids = [s.meta.id for s in series]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"duplicate series ids: {dupes}")
    start = min(s.values.index[0] for s in series)
    end = max(s.values.index[-1] for s in series)
    calendar = pd.period_range(start, end, freq="M")
    frame = pd.DataFrame(index=calendar)
    for s in series:
        frame[s.meta.id] = s.values.reindex(calendar)
    return Panel(frame, {s.meta.id: s.meta for s in series})


def availability_filter(panel: Panel, cutoff) -> Panel:
    """Drop columns whose history starts after the cutoff quarter.

    The target column is always retained.
    """
    limit = quarter_end_month(cutoff)
    keep = []
    for c in panel.ids:
        first = panel.frame[c].first_valid_index()
        if panel.metas[c].is_target or (first is not None and first <= limit):
            keep.append(c)
    return Panel(panel.frame[keep].copy(), {c: panel.metas[c] for c in keep})


def split(panel: Panel, spec: SplitSpec) -> tuple[Panel, Panel, Panel]:
    """Row-wise partition by quarter boundaries.

    Validation rows stay inside the training panel (they are part of the
    final-refit span); the test panel is disjoint from training.
    """
    cal_q = panel.calendar.asfreq("Q")
    if spec.test_start > cal_q[-1]:
        raise DataError(f"test start {spec.test_start} beyond panel calendar end {cal_q[-1]}")
    train = panel.slice_months(panel.calendar[0], quarter_end_month(spec.train_end))
    valid = panel.slice_quarters(spec.valid_start, spec.valid_end)
    test = panel.slice_quarters(spec.test_start, min(spec.test_end, cal_q[-1]))
    return train, valid, test


# ---------------------------------------------------------------------------
# FRED access and local cache


def _cache_paths(cache_dir: Path, source_code: str) -> tuple[Path, Path]:
    return cache_dir / f"{source_code}.csv", cache_dir / f"{source_code}.json"


def _read_cache(cache_dir: Path, source_code: str) -> TimeSeries:
    csv_path, meta_path = _cache_paths(Path(cache_dir), source_code)
    if not csv_path.exists() or not meta_path.exists():
        raise CacheError(f"no cache for {source_code} under {cache_dir}")
    try:
        info = json.loads(meta_path.read_text())
        rows = pd.read_csv(csv_path, dtype={"date": str, "value": str}, keep_default_na=False)
    except (ValueError, KeyError) as exc:  # pragma: no cover - damaged file
        raise CacheError(f"malformed cache for {source_code}: {exc}") from exc
    if list(rows.columns) != ["date", "value"]:
        raise CacheError(f"malformed cache for {source_code}: columns {list(rows.columns)}")
    values = pd.to_numeric(rows["value"].replace("", np.nan), errors="coerce")
    meta = SeriesMeta(
        id=info.get("id", source_code),
        source_code=source_code,
        frequency=info["frequency"],
        publication_lag_months=int(info.get("publication_lag_months", 0)),
        start_date=info.get("start_date"),
        is_target=bool(info.get("is_target", False)),
        blocks=tuple(info.get("blocks", ("global",))),
    )
    return _series_from_provider_rows(meta, rows["date"].tolist(), values.tolist())


def _series_from_provider_rows(meta: SeriesMeta, dates: list[str], values: list[float]) -> TimeSeries:
    stamps = pd.PeriodIndex([pd.Period(d[:7], freq="M") for d in dates], freq="M")
    if meta.frequency == "quarterly":
        stamps = stamps.asfreq("Q").asfreq("M", how="end")
    ser = pd.Series(values, index=stamps, dtype=float)
    ser = ser[~ser.index.duplicated(keep="last")].sort_index()
    full = pd.period_range(ser.index[0], ser.index[-1], freq="M")
    if meta.frequency == "quarterly":
        grid = full.asfreq("Q").asfreq("M", how="end")
        full = pd.PeriodIndex(sorted(set(grid)), freq="M")
    return TimeSeries(meta, ser.reindex(full))


def _write_cache(cache_dir: Path, series: TimeSeries) -> None:
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = _cache_paths(cache_dir, series.meta.source_code)
    vals = series.values
    rows = pd.DataFrame(
        {
            "date": [p.to_timestamp().strftime("%Y-%m-%d") for p in vals.index],
            "value": ["" if pd.isna(v) else f"{v:.10g}" for v in vals.values],
        }
    )
    rows.to_csv(csv_path, index=False)
    m = series.meta
    meta_path.write_text(
        json.dumps(
            {
                "id": m.id,
                "source_code": m.source_code,
                "frequency": m.frequency,
                "publication_lag_months": m.publication_lag_months,
                "start_date": str(m.start_date) if m.start_date is not None else None,
                "is_target": m.is_target,
                "blocks": list(m.blocks),
            },
            indent=1,
        )
    )


def _throttled_get(session, url: str, params: dict) -> dict:
    global _last_request_at
    with _FETCH_LOCK:
        wait = _MIN_REQUEST_INTERVAL - (time.monotonic() - _last_request_at)
        if wait > 0:
            time.sleep(wait)
        resp = session.get(url, params=params, timeout=30)
        _last_request_at = time.monotonic()
    if resp.status_code == 400 and b"does not exist" in resp.content:
        raise UnknownSeriesError(f"unknown series code {params.get('series_id')!r}")
    resp.raise_for_status()
    return resp.json()


def fetch_series(
    source_code: str,
    cache_dir,
    api_key: str | None,
    *,
    meta: SeriesMeta | None = None,
    offline: bool = False,
    session=None,
) -> TimeSeries:
    """Fetch one series from FRED, refreshing the local cache.

    With ``offline=True`` (or no api_key) the cache is the only source. Levels
    are returned as published; FRED serves seasonally adjusted variants where
    the series code selects one.
    """
    cache_dir = Path(cache_dir)
    if offline or api_key is None:
        series = _read_cache(cache_dir, source_code)
        return series if meta is None else TimeSeries(meta, series.values)
    if session is None:
        import requests

        session = requests.Session()
    try:
        info = _throttled_get(
            session,
            f"{FRED_API_URL}/series",
            {"series_id": source_code, "api_key": api_key, "file_type": "json"},
        )
        obs = _throttled_get(
            session,
            f"{FRED_API_URL}/series/observations",
            {"series_id": source_code, "api_key": api_key, "file_type": "json"},
        )
    except UnknownSeriesError:
        raise
    except Exception as exc:
        log.warning("fetch failed for %s (%s); falling back to cache", source_code, exc)
        series = _read_cache(cache_dir, source_code)
        return series if meta is None else TimeSeries(meta, series.values)
    freq_short = info["seriess"][0].get("frequency_short", "M").upper()
    frequency = "quarterly" if freq_short.startswith("Q") else "monthly"
    if meta is None:
        meta = SeriesMeta(id=source_code, source_code=source_code, frequency=frequency)
    elif meta.frequency != frequency:
        log.warning("%s: manifest frequency %s disagrees with provider %s", source_code, meta.frequency, frequency)
    dates, values = [], []
    for row in obs["observations"]:
        dates.append(row["date"])
        raw = row["value"]
        values.append(np.nan if raw in (".", "") else float(raw))
    series = _series_from_provider_rows(meta, dates, values)
    _write_cache(cache_dir, series)
    return series


# ---------------------------------------------------------------------------
# dataset manifest


@dataclass
class Manifest:
    """Checked-in description of the dataset: codes, lags, start dates, block tags."""

    series: list[SeriesMeta] = field(default_factory=list)

    @property
    def target(self) -> SeriesMeta:
        targets = [s for s in self.series if s.is_target]
        if len(targets) != 1:
            raise DataError(f"manifest must declare exactly one target, found {len(targets)}")
        return targets[0]

    def block_names(self) -> list[str]:
        names: list[str] = []
        for s in self.series:
            for b in s.blocks:
                if b not in names:
                    names.append(b)
        return names


def load_manifest(path) -> Manifest:
    raw = yaml.safe_load(Path(path).read_text())
    series = []
    for entry in raw["series"]:
        series.append(
            SeriesMeta(
                id=entry["id"],
                source_code=entry.get("source_code", entry["id"]),
                frequency=entry["frequency"],
                publication_lag_months=int(entry.get("publication_lag_months", 0)),
                start_date=entry.get("start_date"),
                is_target=bool(entry.get("target", False)),
                blocks=tuple(entry.get("blocks", ["global"])),
            )
        )
    manifest = Manifest(series)
    manifest.target  # validates
    return manifest


def load_growth_panel(
    manifest: Manifest,
    cache_dir,
    api_key: str | None = None,
    *,
    offline: bool = False,
    session=None,
) -> Panel:
    """Fetch (or read from cache) every manifest series and assemble the growth panel."""
    columns = []
    for m in manifest.series:
        levels = fetch_series(m.source_code, cache_dir, api_key, meta=m, offline=offline, session=session)
        columns.append(to_growth(levels))
    return build_panel(columns)
