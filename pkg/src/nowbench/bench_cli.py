"""Command-line driver: fetch data, run the benchmark grid, evaluate, report.

Subcommands:
  fetch     populate the local series cache from the provider
  run       fit every configured methodology and write the prediction cube
  evaluate  metric tables (CSV) from a cube
  report    evaluate + markdown tables + SVG nowcast charts

Every experiment constant (period dates, offsets, cutoffs) is a config
default, overridable from a YAML config file. `--synthetic` swaps in the
generated dataset so the full pipeline runs offline.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import evaluation
from .charts import nowcast_chart
from .data_ingest import (
    Panel,
    SplitSpec,
    availability_filter,
    fetch_series,
    load_growth_panel,
    load_manifest,
    quarter,
    split,
)
from .errors import EstimationError, NowbenchError, SchemaError
from .model_api import BACKENDS, METHODOLOGIES, ModelSpec, derive_seed, fit, predict, tune
from .synthetic import synthetic_panel, synthetic_period
from .vintage_sim import VINTAGE_OFFSETS, mask_vintage, vintage_grid

log = logging.getLogger(__name__)

API_KEY_ENV = "FRED_API_KEY"
CUBE_MAGIC_PREFIX = "# nowbench-cube-v1 sha256="

DEFAULT_PERIODS = {
    "period1": {
        "train_end": "1971Q4",
        "valid_start": "1966Q1",
        "valid_end": "1971Q4",
        "test_start": "1972Q1",
        "test_end": "1983Q4",
        "availability_cutoff": "1960Q4",
    },
    "period2": {
        "train_end": "2004Q4",
        "valid_start": "1992Q1",
        "valid_end": "2004Q4",
        "test_start": "2005Q1",
        "test_end": "2010Q4",
        "availability_cutoff": "1991Q4",
    },
    "period3": {
        "train_end": "2015Q4",
        "valid_start": "2006Q1",
        "valid_end": "2015Q4",
        "test_start": "2016Q1",
        "test_end": "2021Q3",
        "availability_cutoff": "2005Q4",
    },
}


def default_config() -> dict:
    return {
        "manifest": None,  # None: packaged FRED manifest; "synthetic": generated data
        "cache_dir": "cache",
        "output_dir": "out",
        "methodologies": list(METHODOLOGIES),
        "periods": dict(DEFAULT_PERIODS),
        "offsets": list(VINTAGE_OFFSETS),
        "seed": 0,
        "jobs": 1,
        "hyperparams": {},
        "refit": {},
        "tuning": {"enabled": False, "metric": "mae", "grids": {}},
        "synthetic": {"seed": 0},
    }


def load_config(path=None, overrides: dict | None = None) -> dict:
    cfg = default_config()
    if path is not None:
        user = yaml.safe_load(Path(path).read_text()) or {}
        for key, value in user.items():
            if key not in cfg:
                raise SchemaError(f"unknown config key {key!r}; valid keys: {sorted(cfg)}")
            if key == "periods":
                cfg["periods"] = {
                    name: (DEFAULT_PERIODS[name] if spec is None else spec) for name, spec in value.items()
                } if isinstance(value, dict) else {name: DEFAULT_PERIODS[name] for name in value}
            elif isinstance(cfg[key], dict) and isinstance(value, dict) and key != "hyperparams":
                cfg[key] = {**cfg[key], **value}
            else:
                cfg[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    if cfg["manifest"] == "synthetic" and "synthetic" not in cfg["periods"]:
        cfg["periods"] = {"synthetic": synthetic_period()}
    unknown = set(cfg["methodologies"]) - set(METHODOLOGIES)
    if unknown:
        raise SchemaError(f"unknown methodologies in config: {sorted(unknown)}")
    return cfg


def manifest_path(cfg: dict) -> Path:
    if cfg["manifest"] is None:
        from importlib.resources import files

        return Path(str(files("nowbench.resources") / "fred_manifest.yaml"))
    return Path(cfg["manifest"])


def load_base_panel(cfg: dict) -> Panel:
    if cfg["manifest"] == "synthetic":
        return synthetic_panel(seed=cfg["synthetic"].get("seed", 0))
    manifest = load_manifest(manifest_path(cfg))
    api_key = os.environ.get(API_KEY_ENV)
    return load_growth_panel(manifest, cfg["cache_dir"], api_key, offline=api_key is None)


def period_split(period_cfg: dict) -> SplitSpec:
    return SplitSpec(
        period_cfg["train_end"],
        period_cfg["valid_start"],
        period_cfg["valid_end"],
        period_cfg["test_start"],
        period_cfg["test_end"],
    )


# ---------------------------------------------------------------------------
# fetch


def cmd_fetch(cfg: dict, refresh: bool = False) -> int:
    if cfg["manifest"] == "synthetic":
        print("synthetic dataset: nothing to fetch")
        return 0
    manifest = load_manifest(manifest_path(cfg))
    api_key = os.environ.get(API_KEY_ENV)
    cache_dir = Path(cfg["cache_dir"])
    downloaded = cached = 0
    failures: list[str] = []
    target_ok = False
    for meta in manifest.series:
        csv_path = cache_dir / f"{meta.source_code}.csv"
        try:
            if csv_path.exists() and not refresh:
                series = fetch_series(meta.source_code, cache_dir, None, meta=meta, offline=True)
                cached += 1
            else:
                series = fetch_series(meta.source_code, cache_dir, api_key, meta=meta)
                downloaded += 1
            vals = series.values.dropna()
            print(f"  {meta.id:24s} {meta.source_code:18s} {vals.index[0]}..{vals.index[-1]}  ({len(vals)} obs)")
            if meta.is_target:
                target_ok = True
        except NowbenchError as exc:
            failures.append(f"{meta.source_code}: {exc}")
            print(f"  {meta.id:24s} {meta.source_code:18s} FAILED: {exc}")
    print(f"{downloaded} downloaded, {cached} cached, {len(failures)} failed")
    if not target_ok:
        print("target series missing from cache; aborting", file=sys.stderr)
        return 2
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# run


def _cube_header_line() -> str:
    digest = hashlib.sha256(",".join(evaluation.CUBE_HEADER).encode()).hexdigest()
    return CUBE_MAGIC_PREFIX + digest


def _open_cube(path: Path) -> set[tuple[str, str, str, int]]:
    """Validate/initialize the cube file; return the set of existing cell keys."""
    if path.exists():
        with open(path) as fh:
            first = fh.readline().strip()
        if first != _cube_header_line():
            raise SchemaError(f"cube schema drift in {path}: {first!r}")
        cube = evaluation.load_cube(path)
        return set(cube.records)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(_cube_header_line() + "\n")
        fh.write(",".join(evaluation.CUBE_HEADER) + "\n")
    return set()


def _filtered_panel(base: Panel, period_cfg: dict) -> Panel:
    cutoff = period_cfg.get("availability_cutoff")
    return availability_filter(base, cutoff) if cutoff else base


def _period_task(cfg: dict, methodology: str, period_name: str, missing: list[tuple[str, int]]):
    """Fit one (methodology, period) and nowcast its missing grid cells.

    Returns (rows, failures); rows are cube CSV tuples in grid order.
    """
    base = load_base_panel(cfg)
    period_cfg = cfg["periods"][period_name]
    panel = _filtered_panel(base, period_cfg)
    sp = period_split(period_cfg)
    train, _, _ = split(panel, sp)
    seed = derive_seed(cfg["seed"], methodology, period_name)
    spec = ModelSpec(
        methodology,
        dict(cfg["hyperparams"].get(methodology, {})),
        refit_policy=cfg["refit"].get(methodology),
        seed=seed,
    )
    rows, failures = [], []
    try:
        tuning = cfg["tuning"]
        grid = tuning.get("grids", {}).get(methodology)
        if tuning.get("enabled") and grid:
            spec = tune(spec, grid, train, sp, tuning.get("metric", "mae"))
        model = fit(spec, train, sp)
    except NowbenchError as exc:
        return rows, [f"{methodology}/{period_name}: fit failed: {exc}"]
    for q_str, offset in missing:
        try:
            view = mask_vintage(panel, q_str, offset)
            rec = predict(model, view, period_name)
            rows.append((rec.methodology, rec.period, str(rec.quarter), int(rec.offset), rec.value))
        except NowbenchError as exc:
            failures.append(f"{methodology}/{period_name}/{q_str}/{offset:+d}: {exc}")
    return rows, failures


def cmd_run(cfg: dict, cube_path=None) -> int:
    out_dir = Path(cfg["output_dir"])
    cube_path = Path(cube_path) if cube_path else out_dir / "cube.csv"
    existing = _open_cube(cube_path)

    tasks = []
    for methodology in cfg["methodologies"]:
        for period_name, period_cfg in cfg["periods"].items():
            sp = period_split(period_cfg)
            grid = [
                (str(q), k)
                for q, k in vintage_grid(sp.test_quarters())
                if k in set(cfg["offsets"])
            ]
            missing = [(q, k) for q, k in grid if (methodology, period_name, q, k) not in existing]
            if missing:
                tasks.append((methodology, period_name, missing))
            else:
                log.info("%s/%s: all %d cells present, skipping", methodology, period_name, len(grid))

    all_failures: list[str] = []
    written = 0
    with open(cube_path, "a", newline="") as fh:
        def flush(rows):
            nonlocal written
            for row in rows:
                fh.write(f"{row[0]},{row[1]},{row[2]},{row[3]},{row[4]:.12g}\n")
                written += 1
            fh.flush()

        jobs = int(cfg.get("jobs", 1))
        if jobs > 1 and len(tasks) > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [pool.submit(_period_task, cfg, m, p, miss) for m, p, miss in tasks]
                for (m, p, _), fut in zip(tasks, futures):
                    rows, failures = fut.result()
                    flush(rows)
                    all_failures.extend(failures)
                    print(f"  {m}/{p}: {len(rows)} cells")
        else:
            for m, p, miss in tasks:
                rows, failures = _period_task(cfg, m, p, miss)
                flush(rows)
                all_failures.extend(failures)
                print(f"  {m}/{p}: {len(rows)} cells")

    print(f"cube: {cube_path} (+{written} cells)")
    for failure in all_failures:
        log.error("cell failed: %s", failure)
        print(f"  FAILED {failure}", file=sys.stderr)
    return 1 if all_failures else 0


# ---------------------------------------------------------------------------
# evaluate / report


def _actuals_for(cfg: dict, cube: evaluation.PredictionCube) -> None:
    base = load_base_panel(cfg)
    growth = base.target_growth().dropna()
    for period in cube.periods():
        for q_str in cube.quarters(period):
            q = quarter(q_str)
            if q in growth.index:
                cube.set_actual(q, float(growth[q]))


def _markdown_table(frame: pd.DataFrame, index_name: str) -> str:
    cols = [index_name, *frame.columns]
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for idx, row in frame.iterrows():
        cells = [str(idx)] + [f"{v:.3f}" if isinstance(v, float) else str(v) for v in row]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_evaluate(cfg: dict, cube_path, out_dir=None, write_markdown: bool = False) -> int:
    out = Path(out_dir or cfg["output_dir"]) / "tables"
    out.mkdir(parents=True, exist_ok=True)
    cube = evaluation.load_cube(cube_path)
    _actuals_for(cfg, cube)
    cube.validate()
    periods = cube.periods()
    accuracy_ok = True
    for period in periods:
        for metric in ("mae", "rmse"):
            table = evaluation.ratio_table(cube, period, metric)
            table.to_csv(out / f"ratio_{metric}_{period}.csv", float_format="%.6g")
            if write_markdown:
                (out / f"ratio_{metric}_{period}.md").write_text(_markdown_table(table, "Vintage"))
        rev = evaluation.avg_revision(cube, period)
        rev_frame = pd.DataFrame(
            {"avg_revision_pp": pd.Series(rev).sort_values()}
        )
        rev_frame.to_csv(out / f"revisions_{period}.csv", float_format="%.6g")
        if write_markdown:
            (out / f"revisions_{period}.md").write_text(_markdown_table(rev_frame, "Methodology"))
    scores = evaluation.aggregate_score(cube)
    ranked = evaluation.rank_methodologies(scores)
    frame = pd.DataFrame({"aggregate_score": [scores[m] for m in ranked]}, index=ranked)
    frame.to_csv(out / "aggregate_scores.csv", float_format="%.6g")
    if write_markdown:
        (out / "aggregate_scores.md").write_text(_markdown_table(frame, "Methodology"))
    print(f"tables written to {out} ({len(periods)} periods)")
    return 0 if accuracy_ok else 1


def cmd_report(cfg: dict, cube_path, out_dir=None) -> int:
    rc = cmd_evaluate(cfg, cube_path, out_dir, write_markdown=True)
    out = Path(out_dir or cfg["output_dir"])
    charts_dir = out / "charts"
    charts_dir.mkdir(parents=True, exist_ok=True)
    cube = evaluation.load_cube(cube_path)
    _actuals_for(cfg, cube)
    for period in cube.periods():
        quarters = cube.quarters(period)
        labels = quarters
        actual = [cube.actuals[q] for q in quarters]
        # order methodology panels by average raw RMSE across offsets
        order = sorted(
            cube.methodologies(),
            key=lambda m: np.mean(
                [evaluation.raw_metric(cube, m, period, k, "rmse") for k in VINTAGE_OFFSETS]
            ),
        )
        for rank, m in enumerate(order, start=1):
            per_offset = {
                k: [cube.value(m, period, q, k) for q in quarters] for k in VINTAGE_OFFSETS
            }
            svg = nowcast_chart(labels, actual, per_offset, f"{m} nowcasts, {period}")
            (charts_dir / f"{period}_{rank:02d}_{m}.svg").write_text(svg)
    print(f"charts written to {charts_dir}")
    return rc


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nowbench", description="GDP nowcasting benchmark harness")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--out", help="output directory (default from config)")
    parser.add_argument("--seed", type=int, help="global seed override")
    parser.add_argument("--jobs", type=int, help="parallel workers for the run grid")
    parser.add_argument("--synthetic", action="store_true", help="use the generated offline dataset")
    sub = parser.add_subparsers(dest="command", required=True)
    p_fetch = sub.add_parser("fetch", help="populate the local series cache")
    p_fetch.add_argument("--refresh", action="store_true", help="re-download series already cached")
    p_run = sub.add_parser("run", help="run the benchmark grid into a prediction cube")
    p_run.add_argument("--cube", help="cube CSV path (default <out>/cube.csv)")
    p_eval = sub.add_parser("evaluate", help="write metric tables from a cube")
    p_eval.add_argument("--cube", help="cube CSV path (default <out>/cube.csv)")
    p_rep = sub.add_parser("report", help="tables plus SVG nowcast charts")
    p_rep.add_argument("--cube", help="cube CSV path (default <out>/cube.csv)")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    overrides = {"output_dir": args.out, "seed": args.seed, "jobs": args.jobs}
    if args.synthetic:
        overrides["manifest"] = "synthetic"
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "fetch":
            return cmd_fetch(cfg, refresh=args.refresh)
        cube_path = getattr(args, "cube", None) or Path(cfg["output_dir"]) / "cube.csv"
        if args.command == "run":
            return cmd_run(cfg, cube_path)
        if args.command == "evaluate":
            return cmd_evaluate(cfg, cube_path)
        if args.command == "report":
            return cmd_report(cfg, cube_path)
    except NowbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
