# standard library imports
import logging
from itertools import groupby
from pathlib import Path
from typing import List, Optional, Sequence

# third-party imports
import pandas as pd

# local imports
import povsim.config.config_constants as cfg
from povsim.errors import IoError, ParseError
from povsim.metrics import ConfusionCounts, GroupMetrics, GroupStat, MetricsRecord
from povsim.simulation import AggregateRecord, MetricSummary, RunRecord
from povsim.util import save_json


__docformat__ = "google"


RUN_COLUMNS = ("strategy", "repetition", "budget") + cfg.METRIC_NAMES + ("digest", "depth")
GROUP_COLUMNS = ("strategy", "repetition", "budget", "group", "n", "accuracy", "mse", "dp", "tp", "tn", "fp", "fn", "absent")
AGGREGATE_COLUMNS = ("strategy", "budget", "metric", "mean", "ci_low", "ci_high", "n_missing")


# CELLS: ============================================


def _fmt(value) -> str:
    """Empty cell for missing values, shortest round-trip repr for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _float(cell: str, column: str, row: int) -> Optional[float]:
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"row {row}, column {column!r}: {cell!r} is not a number")


def _int(cell: str, column: str, row: int, optional=False) -> Optional[int]:
    if cell == "" and optional:
        return None
    try:
        return int(cell)
    except ValueError:
        raise ParseError(f"row {row}, column {column!r}: {cell!r} is not an integer")


def _write(rows, columns, path: Path):
    frame = pd.DataFrame([[_fmt(v) for v in row] for row in rows], columns=list(columns), dtype=str)
    try:
        frame.to_csv(path, index=False, lineterminator="\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror or e}")
    logging.info(f"wrote {len(frame)} rows to {path}")


def _read(path: Path, columns) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path} is empty")
    except pd.errors.ParserError as e:
        raise ParseError(f"{path} is malformed: {e}")
    except OSError as e:
        raise IoError(f"cannot read {path}: {e.strerror or e}")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ParseError(f"{path} lacks the column(s) {', '.join(missing)}")
    return frame


# WRITERS: ==========================================


def write_runs_csv(records: Sequence[RunRecord], path):
    """One row per RunRecord, metric columns named after the metrics, missing metrics as empty cells."""
    rows = [(r.strategy, r.repetition, r.budget) + tuple(r.metrics.as_dict().values()) + (r.digest, r.depth) for r in records]
    _write(rows, RUN_COLUMNS, Path(path))


def write_groups_csv(records: Sequence[RunRecord], path):
    """One row per (record, group); declared groups with no holdout point are written with absent = 1."""
    rows = []
    for r in records:
        gm = r.metrics.groups
        if gm is None:
            continue
        for s in gm.stats:
            c = s.counts
            rows.append((r.strategy, r.repetition, r.budget, s.label, s.n, s.accuracy, s.mse, s.dp, c.tp, c.tn, c.fp, c.fn, 0))
        for label in gm.absent:
            rows.append((r.strategy, r.repetition, r.budget, label, 0, None, None, None, None, None, None, None, 1))
    _write(rows, GROUP_COLUMNS, Path(path))


def write_aggregates_csv(aggregates: Sequence[AggregateRecord], path):
    rows = [(a.strategy, a.budget, name, s.mean, s.ci_low, s.ci_high, s.n_missing)
            for a in aggregates for name, s in a.metrics.items()]
    _write(rows, AGGREGATE_COLUMNS, Path(path))


def write_aggregates_json(aggregates: Sequence[AggregateRecord], path):
    try:
        save_json([{"strategy": a.strategy,
                     "budget": a.budget,
                     "metrics": {name: {"mean": s.mean, "ci_low": s.ci_low, "ci_high": s.ci_high, "n_missing": s.n_missing}
                                 for name, s in a.metrics.items()}} for a in aggregates], path)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e.strerror or e}")


# READERS: ==========================================


def _read_groups(path) -> dict:
    frame = _read(path, GROUP_COLUMNS)
    cells = {}
    for row, rec in enumerate(frame.itertuples(index=False), start=2):
        rec = rec._asdict()
        key = (rec["strategy"], _int(rec["repetition"], "repetition", row), _int(rec["budget"], "budget", row))
        stats, absent = cells.setdefault(key, ([], []))
        if rec["absent"] == "1":
            absent.append(rec["group"])
            continue
        counts = ConfusionCounts(*(_int(rec[c], c, row) for c in ("tp", "tn", "fp", "fn")))
        stats.append(GroupStat(label=rec["group"],
                               n=_int(rec["n"], "n", row),
                               accuracy=_float(rec["accuracy"], "accuracy", row),
                               mse=_float(rec["mse"], "mse", row),
                               dp=_float(rec["dp"], "dp", row),
                               counts=counts))
    return {k: GroupMetrics(stats=tuple(s), absent=tuple(a)) for k, (s, a) in cells.items()}


def read_runs_csv(path, groups_path=None) -> List[RunRecord]:
    """
    Parses runs.csv (and optionally groups.csv) back into RunRecords.

    Raises:
        ParseError: empty or malformed file
        IoError: unreadable file
    """
    frame = _read(path, RUN_COLUMNS)
    if len(frame) == 0:
        raise ParseError(f"{path} has no run")
    groups = _read_groups(groups_path) if groups_path is not None else {}
    records = []
    for row, rec in enumerate(frame.itertuples(index=False), start=2):
        rec = rec._asdict()
        if rec["strategy"] not in cfg.STRATEGY_NAMES:
            raise ParseError(f"row {row}: unknown strategy {rec['strategy']!r}")
        key = (rec["strategy"], _int(rec["repetition"], "repetition", row), _int(rec["budget"], "budget", row))
        metrics = MetricsRecord(**{m: _float(rec[m], m, row) for m in cfg.METRIC_NAMES}, groups=groups.get(key))
        records.append(RunRecord(strategy=key[0], repetition=key[1], budget=key[2], metrics=metrics,
                                 digest=rec["digest"], depth=_int(rec["depth"], "depth", row, optional=True)))
    return records


def read_aggregates_csv(path) -> List[AggregateRecord]:
    frame = _read(path, AGGREGATE_COLUMNS)
    rows = []
    for row, rec in enumerate(frame.itertuples(index=False), start=2):
        rec = rec._asdict()
        summary = MetricSummary(*(_float(rec[c], c, row) for c in ("mean", "ci_low", "ci_high")),
                                n_missing=_int(rec["n_missing"], "n_missing", row))
        rows.append(((rec["strategy"], _int(rec["budget"], "budget", row)), rec["metric"], summary))
    return [AggregateRecord(strategy=k[0], budget=k[1], metrics={m: s for _, m, s in cell})
            for k, cell in groupby(rows, key=lambda r: r[0])]
