"""Ingestion of regional query counts, standardization, and CSV/JSON writers.

Input CSV schema (header required, UTF-8, one row per region-period or per
region-month; rows sharing ``region`` and ``period`` are aggregated)::

    region,period,q1,q2,q3,q4,q5,total,grp_pc,mining,manufacturing,
    emissions_pc,pop_density,age65,tertiary
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .model import Dataset

__all__ = [
    "QUERY_COLUMNS",
    "INDICATOR_NAMES",
    "CAUSE_COLUMNS",
    "VARIANTS",
    "SchemaError",
    "RawQueryTable",
    "RowViolation",
    "read_raw_table",
    "parse_raw_rows",
    "compute_indicator_shares",
    "build_cause_matrix",
    "standardize_columns",
    "standardize_dataset",
    "load_config",
    "fmt",
    "write_csv",
]

QUERY_COLUMNS = ("q1", "q2", "q3", "q4", "q5")
INDICATOR_NAMES = (
    "climate_change",
    "endangered_environment",
    "political",
    "science",
    "renewable_energy",
)
CAUSE_COLUMNS = (
    "grp_pc",
    "mining",
    "manufacturing",
    "emissions_pc",
    "pop_density",
    "age65",
    "tertiary",
)
REQUIRED_COLUMNS = ("region", "period") + QUERY_COLUMNS + ("total",) + CAUSE_COLUMNS

# Cause sets of the two published model variants; grp_pc2/grp_pc3 are powers
# of raw grp_pc, each standardized on its own.
VARIANTS = {
    "A": (
        "grp_pc",
        "grp_pc2",
        "grp_pc3",
        "mining",
        "manufacturing",
        "emissions_pc",
        "pop_density",
        "age65",
        "tertiary",
    ),
    "B": ("grp_pc", "grp_pc2", "grp_pc3", "manufacturing", "emissions_pc", "pop_density"),
}


class SchemaError(ValueError):
    """Input data or configuration does not match the documented schema."""


@dataclass(frozen=True)
class RowViolation:
    line: int
    region: str
    period: str
    reason: str

    def __str__(self):
        return f"line {self.line} ({self.region or '?'}, {self.period or '?'}): {self.reason}"


@dataclass(frozen=True)
class RawQueryTable:
    """Aggregated query counts and raw cause values of one period."""

    period: str
    regions: tuple[str, ...]
    counts: np.ndarray  # N x 5
    total: np.ndarray  # N
    causes: dict = field(compare=False)  # column name -> N-vector, raw scale

    def __post_init__(self):
        if len(set(self.regions)) != len(self.regions):
            raise SchemaError(f"duplicate regions in period {self.period}")
        if np.any(self.counts < 0):
            raise SchemaError("query counts must be nonnegative")
        if np.any(self.total < self.counts.sum(axis=1) - 1e-9):
            raise SchemaError("total must be at least the sum of category counts")


def _row_values(row: dict, line: int) -> tuple[dict | None, list[RowViolation]]:
    region = (row.get("region") or "").strip()
    period = (row.get("period") or "").strip()
    problems = []
    if not region:
        problems.append("empty region label")
    if not period:
        problems.append("empty period label")
    vals = {}
    for col in QUERY_COLUMNS + ("total",) + CAUSE_COLUMNS:
        text = (row.get(col) or "").strip()
        try:
            v = float(text)
        except ValueError:
            problems.append(f"{col}={text!r} is not a number")
            continue
        if not math.isfinite(v):
            problems.append(f"{col} is not finite")
            continue
        vals[col] = v
    if all(c in vals for c in QUERY_COLUMNS + ("total",)):
        counts = [vals[c] for c in QUERY_COLUMNS]
        if any(c < 0 for c in counts):
            problems.append("negative query count")
        if vals["total"] <= 0:
            problems.append("total query count is not positive")
        elif vals["total"] < sum(counts):
            problems.append("total is smaller than the sum of category counts")
    if problems:
        return None, [RowViolation(line, region, period, p) for p in problems]
    vals["region"], vals["period"] = region, period
    return vals, []


def parse_raw_rows(lines: Iterable[str]) -> tuple[dict[str, RawQueryTable], list[RowViolation]]:
    """Validate every row, then aggregate valid rows per (period, region).

    Counts and totals are summed over a region's rows within a period (monthly
    rows become one period row); cause values are averaged. Periods keep their
    order of first appearance. Returns the tables and all violations found.
    """
    reader = csv.DictReader(lines)
    header = reader.fieldnames or []
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise SchemaError(f"missing required column(s): {', '.join(missing)}")

    violations: list[RowViolation] = []
    groups: dict[str, dict[str, list[dict]]] = {}
    for line, row in enumerate(reader, start=2):
        vals, bad = _row_values(row, line)
        if bad:
            violations.extend(bad)
            continue
        groups.setdefault(vals["period"], {}).setdefault(vals["region"], []).append(vals)

    tables = {}
    for period, regions in groups.items():
        names = tuple(regions)
        rows = [regions[r] for r in names]
        counts = np.array([[sum(v[c] for v in rs) for c in QUERY_COLUMNS] for rs in rows])
        total = np.array([sum(v["total"] for v in rs) for rs in rows])
        causes = {c: np.array([np.mean([v[c] for v in rs]) for rs in rows]) for c in CAUSE_COLUMNS}
        tables[period] = RawQueryTable(period, names, counts, total, causes)
    return tables, violations


def read_raw_table(path) -> tuple[dict[str, RawQueryTable], list[RowViolation]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_raw_rows(fh)


def compute_indicator_shares(raw: RawQueryTable) -> np.ndarray:
    """Category counts divided by each region's total query count."""
    zero = [r for r, t in zip(raw.regions, raw.total) if not t > 0]
    if zero:
        raise SchemaError(f"regions with zero total queries in period {raw.period}: {', '.join(zero)}")
    return raw.counts / raw.total[:, None]


def build_cause_matrix(raw: RawQueryTable, causes: Sequence[str]) -> np.ndarray:
    """Raw-scale cause columns; ``grp_pc2``/``grp_pc3`` are powers of raw ``grp_pc``."""
    cols = []
    for name in causes:
        if name in raw.causes:
            cols.append(raw.causes[name])
        elif name in ("grp_pc2", "grp_pc3"):
            cols.append(raw.causes["grp_pc"] ** int(name[-1]))
        else:
            raise SchemaError(f"unknown cause column {name!r}")
    return np.column_stack(cols)


def standardize_columns(M: np.ndarray, names: Sequence[str]) -> tuple[np.ndarray, dict]:
    """Column z-scores with the sample SD (divisor N-1)."""
    M = np.asarray(M, dtype=float)
    mean = M.mean(axis=0)
    sd = M.std(axis=0, ddof=1)
    const = [n for n, s in zip(names, sd) if not s > 0]
    if const:
        raise SchemaError(f"constant column(s) cannot be standardized: {', '.join(const)}")
    return (M - mean) / sd, {n: (float(m), float(s)) for n, m, s in zip(names, mean, sd)}


def standardize_dataset(
    raw: RawQueryTable,
    causes: Sequence[str],
    indicator_names: Sequence[str] = INDICATOR_NAMES,
) -> Dataset:
    """Shares and causes, each column standardized, as a :class:`Dataset`."""
    Y, ystats = standardize_columns(compute_indicator_shares(raw), indicator_names)
    X, xstats = standardize_columns(build_cause_matrix(raw, causes), causes)
    return Dataset(
        unit_labels=raw.regions,
        Y=Y,
        X=X,
        period_label=raw.period,
        indicator_names=tuple(indicator_names),
        cause_names=tuple(causes),
        column_stats={**ystats, **xstats},
    )


# -- configuration -------------------------------------------------------------

DEFAULT_CONFIG = {
    "input": None,
    "variant": "B",
    "causes": None,
    "periods": None,
    "compare": None,
    "scores": None,
    "drop_invalid_rows": False,
    "seed": 0,
    "fit": {"gtol": 1e-6, "ftol": 1e-10, "max_iter": 500, "se_methods": ["naive", "mlm", "mlr"]},
    "loess": {"span": 0.75, "degree": 2, "x_scale": "raw", "n_grid": 100},
    "simulate": {},
    "recover": {},
}


def load_config(path) -> dict:
    """Read a YAML config, fill defaults and resolve file paths against its folder."""
    path = Path(path)
    try:
        user = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise SchemaError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(user, dict):
        raise SchemaError(f"config {path} must be a mapping")
    unknown = set(user) - set(DEFAULT_CONFIG)
    if unknown:
        raise SchemaError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULT_CONFIG.items()}
    for k, v in user.items():
        if isinstance(cfg.get(k), dict):
            if not isinstance(v, dict):
                raise SchemaError(f"config key {k!r} must be a mapping")
            cfg[k].update(v)
        else:
            cfg[k] = v
    for key in ("input", "scores"):
        if cfg[key] is not None:
            cfg[key] = str((path.parent / str(cfg[key])).resolve())
    if cfg["causes"] is None:
        if str(cfg["variant"]) not in VARIANTS:
            raise SchemaError(f"variant must be one of {sorted(VARIANTS)}, got {cfg['variant']!r}")
        cfg["causes"] = list(VARIANTS[str(cfg["variant"])])
    if cfg["periods"] is not None:
        cfg["periods"] = [str(p) for p in cfg["periods"]]
    if cfg["compare"] is not None:
        cfg["compare"] = [str(p) for p in cfg["compare"]]
        if len(cfg["compare"]) != 2:
            raise SchemaError("compare must list exactly two periods")
    if cfg["loess"]["x_scale"] not in ("raw", "standardized"):
        raise SchemaError("loess.x_scale must be 'raw' or 'standardized'")
    return cfg


# -- output --------------------------------------------------------------------


def fmt(v) -> str:
    """Fixed 6-significant-digit text for floats; blanks for missing values."""
    if v is None:
        return ""
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if not math.isfinite(v):
        return ""
    out = f"{v:.6g}"
    return "0" if out == "-0" else out


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.6g}") if math.isfinite(v) else None
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2) + "\n", encoding="utf-8")
    return path
