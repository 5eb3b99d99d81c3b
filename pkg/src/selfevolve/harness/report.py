"""Metric series and report emission (CSV / JSONL) with stable formatting."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from ..errors import ConfigError, ContractViolation

SERIES_COLUMNS = ("series", "x_label", "x", "y", "stderr")
TELEMETRY_COLUMNS = ("episode", "step", "mode", "arm", "val_perf", "mean_tool_use")
CRITERIA_COLUMNS = ("dimension", "paradigm", "mean", "stderr", "n", "better", "winner")
FORMATS = ("csv", "jsonl")


@dataclass
class MetricSeries:
    name: str
    x_label: str
    points: list[tuple[float, float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.points = [(float(x), float(y), float(s)) for x, y, s in self.points]
        xs = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ContractViolation(f"series {self.name!r}: x must be strictly increasing")

    def rows(self) -> list[dict]:
        return [{"series": self.name, "x_label": self.x_label, "x": x, "y": y, "stderr": s} for x, y, s in self.points]

    def to_dict(self) -> dict:
        return {"name": self.name, "x_label": self.x_label, "points": [list(p) for p in self.points]}

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSeries":
        return cls(d["name"], d["x_label"], [tuple(p) for p in d["points"]])


def fmt(value) -> str:
    """Locale-independent text for a cell: shortest round-trip repr for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    return str(value)


def _plain(value):
    if isinstance(value, float) and not math.isfinite(value):
        return fmt(value)
    return value


def render(rows: Sequence[dict], columns: Sequence[str], format: str) -> str:
    if format not in FORMATS:
        raise ConfigError(f"unknown format {format!r}; expected one of {FORMATS}", "format")
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(row.get(c)) for c in columns])
        return buf.getvalue()
    return "".join(
        json.dumps({c: _plain(row.get(c)) for c in columns}, separators=(",", ":")) + "\n" for row in rows
    )


def emit_report(data, path: str | Path, format: str = "csv", columns: Sequence[str] | None = None) -> Path:
    """Write a ``MetricSeries``, a list of series, or a list of row dicts.

    Rows are written with a fixed column order (``SERIES_COLUMNS`` for series,
    ``columns`` otherwise); an empty input gives a header-only CSV or an
    empty JSONL file.
    """
    if isinstance(data, MetricSeries):
        data = [data]
    data = list(data)
    if data and isinstance(data[0], MetricSeries):
        rows = [r for s in data for r in s.rows()]
        columns = SERIES_COLUMNS
    else:
        rows = data
        if columns is None:
            columns = SERIES_COLUMNS if not rows else tuple(rows[0].keys())
    text = render(rows, columns, format)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path
