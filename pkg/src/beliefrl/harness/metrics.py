"""Metric series (CSV/JSONL persistence) and curve smoothing."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


class MetricSeries:
    """Append-only rows keyed by a strictly increasing iteration index.

    Rows are dicts; the column set is the union over rows (missing cells are
    written empty). Values should be plain scalars so the CSV/JSONL round-trip
    is lossless.
    """

    def __init__(self, rows: list[dict] | None = None):
        self.rows: list[dict] = []
        for row in rows or []:
            self.append(**row)

    def append(self, **values) -> dict:
        if "iteration" not in values:
            raise ValueError("metric rows require an 'iteration' index")
        it = int(values["iteration"])
        if self.rows and it <= int(self.rows[-1]["iteration"]):
            raise ValueError(
                f"iteration index must increase: got {it} after "
                f"{self.rows[-1]['iteration']}")
        row = {k: _plain(v) for k, v in values.items()}
        self.rows.append(row)
        return row

    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.rows:
            for key in row:
                if key not in cols:
                    cols.append(key)
        return cols

    def column(self, name: str) -> list:
        return [row[name] for row in self.rows if name in row]

    def __len__(self) -> int:
        return len(self.rows)

    # -- persistence ---------------------------------------------------------

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.columns())
            writer.writeheader()
            writer.writerows(self.rows)
        return path

    def to_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            for row in self.rows:
                fh.write(json.dumps(row) + "\n")
        return path

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricSeries":
        series = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                parsed = {k: _parse(v) for k, v in row.items() if v != ""}
                series.append(**parsed)
        return series

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "MetricSeries":
        with open(path) as fh:
            return cls([json.loads(line) for line in fh if line.strip()])


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def _parse(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def smooth_curve(values, window: int) -> np.ndarray:
    """Trailing moving average; the window shrinks at the left boundary.

    out[i] = mean(values[max(0, i - window + 1) : i + 1])
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("cannot smooth an empty series")
    if window < 1:
        raise ValueError("window must be >= 1")
    csum = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(values.size)
    lo = np.maximum(idx - window + 1, 0)
    return (csum[idx + 1] - csum[lo]) / (idx + 1 - lo)
