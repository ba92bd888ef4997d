"""CSV and markdown emission for sweep records, statistics and win tables."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .experiments import (
    AggregateStats,
    ConfigKey,
    GridErrorRow,
    SweepRecord,
    WinCounts,
    format_interval,
    noise_name,
    parse_interval,
    strategy_summary,
    win_counts,
)
from .sim import TrialRecord

RECORD_COLUMNS = [
    "grid_w", "grid_h", "agents", "pattern", "comm_interval", "strategy", "alpha", "beta",
    "seed", "success", "steps", "error_flag", "duration_ms",
]
STATS_COLUMNS = [
    "grid_w", "grid_h", "agents", "pattern", "comm_interval", "strategy", "alpha", "beta",
    "trials", "successes", "errors", "success_rate", "success_std",
    "mean_steps_failures_as_max", "mean_steps_successes_only",
]
WIN_COLUMNS = ["feature", "value", "strategy", "success_wins", "efficiency_wins", "success_ties", "efficiency_ties"]
GRID_ERROR_COLUMNS = list(GridErrorRow._fields)
WIN_FEATURES = ("agents", "pattern", "interval", "grid", "noise")


def fmt(x) -> str:
    """Six significant digits for floats; blanks for missing values."""
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        if math.isinf(x):
            return "inf"
        return f"{x:.6g}"
    return str(x)


def _key_cells(key: ConfigKey) -> list[str]:
    return [fmt(key.grid_w), fmt(key.grid_h), fmt(key.agents), key.pattern,
            format_interval(key.comm_interval), key.strategy, fmt(float(key.alpha)), fmt(float(key.beta))]


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def records_csv_rows(records: Iterable[SweepRecord], timing: bool = False):
    for r in records:
        rec = r.record
        yield _key_cells(r.key) + [
            str(rec.seed), fmt(rec.success), fmt(rec.steps_to_discovery), fmt(rec.error_flag),
            fmt(float(rec.duration_ms)) if timing else "0",
        ]


def write_records(path, records: Iterable[SweepRecord], timing: bool = False) -> Path:
    """Records CSV. Without ``timing`` the duration column is written as 0 so
    that re-runs are byte-identical."""
    return _write_csv(path, RECORD_COLUMNS, records_csv_rows(records, timing))


def read_records(path) -> list[SweepRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RECORD_COLUMNS:
            raise ValueError(f"{path}: expected columns {RECORD_COLUMNS}, got {reader.fieldnames}")
        out = []
        counters = defaultdict(int)
        for row in reader:
            key = ConfigKey(int(row["grid_w"]), int(row["grid_h"]), int(row["agents"]), row["pattern"],
                            parse_interval(row["comm_interval"]), row["strategy"],
                            float(row["alpha"]), float(row["beta"]))
            success = row["success"] == "1"
            rec = TrialRecord(
                success=success,
                steps_to_discovery=int(row["steps"]) if row["steps"] else None,
                seed=int(row["seed"]),
                config_digest="",
                error_flag=row["error_flag"] == "1",
                duration_ms=float(row["duration_ms"] or 0.0),
            )
            out.append(SweepRecord(key, counters[key], rec))
            counters[key] += 1
    return sorted(out, key=lambda r: (r.key, r.trial))


def write_stats(path, stats: dict[ConfigKey, AggregateStats]) -> Path:
    rows = (
        _key_cells(key) + [fmt(st.trials), fmt(st.successes), fmt(st.errors), fmt(st.success_rate),
                           fmt(st.success_std), fmt(st.mean_steps_failures_as_max),
                           fmt(st.mean_steps_successes_only)]
        for key, st in sorted(stats.items())
    )
    return _write_csv(path, STATS_COLUMNS, rows)


def write_wins(path, wins: dict[str, WinCounts]) -> Path:
    rows = (
        [feature, str(fv), strat, str(sw), str(ew), str(st), str(et)]
        for feature, wc in wins.items()
        for fv, strat, sw, ew, st, et in wc.rows()
    )
    return _write_csv(path, WIN_COLUMNS, rows)


def write_grid_error(path, rows: Sequence[GridErrorRow]) -> Path:
    return _write_csv(path, GRID_ERROR_COLUMNS, ([fmt(v) for v in row] for row in rows))


def build_wins(stats: dict[ConfigKey, AggregateStats], exclude_extremes: bool = True) -> dict[str, WinCounts]:
    """Win tables for every feature. Intermittent-only unless that leaves nothing."""
    has_intermittent = any(k.comm_interval not in (0, math.inf) for k in stats)
    excl = exclude_extremes and has_intermittent
    return {f: win_counts(stats, f, exclude_extremes=excl) for f in WIN_FEATURES}


# -- markdown ----------------------------------------------------------------

def _md_table(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines)


def render_markdown(stats: dict[ConfigKey, AggregateStats], wins: dict[str, WinCounts]) -> str:
    strategies = sorted({k.strategy for k in stats})
    overall = build_wins(stats, exclude_extremes=False) if stats else {}
    summary = strategy_summary(stats)
    parts = ["# Sweep report", "", f"Configurations: {len(stats)}; trials: {sum(s.trials for s in stats.values())}", ""]

    parts += ["## Overall performance", ""]
    rows = []
    for s in strategies:
        sw = sum(v for (fv, st), v in overall["agents"].success_wins.items() if st == s)
        ew = sum(v for (fv, st), v in overall["agents"].efficiency_wins.items() if st == s)
        sm = summary[s]
        rows.append([s, f"{sm['success_mean']:.3f} ± {sm['success_std']:.3f}", sw, ew])
    parts += [_md_table(["Merge method", "Avg. success", "Success wins", "Efficiency wins"], rows), ""]

    parts += ["## Efficiency wins by configuration feature", ""]
    rows = []
    for feature in ("agents", "pattern", "interval", "grid"):
        wc = wins.get(feature)
        if wc is None:
            continue
        values = sorted({fv for fv, _ in wc.efficiency_wins}, key=_feature_sort)
        for fv in values:
            rows.append([f"{feature}={fv}"] + [wc.efficiency_wins.get((fv, s), 0) for s in strategies])
    parts += [_md_table(["Feature"] + strategies, rows), ""]

    parts += ["## Wins by noise profile", ""]
    wc = wins.get("noise")
    rows = []
    if wc is not None:
        for fv in sorted({fv for fv, _ in wc.success_wins}):
            rows.append([fv] + [wc.success_wins.get((fv, s), 0) for s in strategies]
                        + [wc.efficiency_wins.get((fv, s), 0) for s in strategies])
    parts += [_md_table(["Noise profile"] + [f"success: {s}" for s in strategies]
                        + [f"efficiency: {s}" for s in strategies], rows), ""]

    parts += ["## Metrics by noise profile", ""]
    pooled = defaultdict(lambda: [0, 0, 0.0])
    for key, st in stats.items():
        acc = pooled[(noise_name(key.alpha, key.beta), key.strategy)]
        acc[0] += st.trials
        acc[1] += st.successes
        acc[2] += st.mean_steps_failures_as_max * st.trials
    rows = []
    for nz in sorted({n for n, _ in pooled}):
        for metric in ("Success rate", "Avg steps"):
            row = [nz, metric]
            for s in strategies:
                t, k, steps = pooled.get((nz, s), (0, 0, 0.0))
                if not t:
                    row.append("")
                elif metric == "Success rate":
                    row.append(f"{k / t:.3f}")
                else:
                    row.append(f"{steps / t:.1f}")
            rows.append(row)
    parts += [_md_table(["Noise profile", "Metric"] + strategies, rows), ""]
    return "\n".join(parts)


def _feature_sort(v):
    s = str(v)
    head = s.split("x")[0]
    try:
        return (0, float(head), s)
    except ValueError:
        return (1, 0.0, s)


def emit_report(stats: dict[ConfigKey, AggregateStats], wins: Optional[dict[str, WinCounts]], out_dir,
                formats: Sequence[str] = ("csv", "markdown")) -> list[Path]:
    """Write stats.csv / wins.csv and/or report.md into ``out_dir``."""
    out_dir = Path(out_dir)
    wins = wins if wins is not None else (build_wins(stats) if stats else {})
    written = []
    for f in formats:
        if f == "csv":
            written.append(write_stats(out_dir / "stats.csv", stats))
            written.append(write_wins(out_dir / "wins.csv", wins))
        elif f == "markdown":
            path = out_dir / "report.md"
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(render_markdown(stats, wins))
            written.append(path)
        else:
            raise ValueError(f"unknown report format {f!r}")
    return written
