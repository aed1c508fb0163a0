"""Plain-text field dumps and the monitor series CSV.

Floats are written with ``repr`` so a dump parses back to identical bits.
"""
from __future__ import annotations

import csv
import os

import numpy as np

from .errors import MissingDataError
from .flow import SERIES_COLUMNS


def write_field(path, values, s: float = 0.0, **meta):
    values = np.asarray(values, dtype=float)
    dims = {"nx": values.shape[0]}
    if values.ndim == 2:
        dims["ny"] = values.shape[1]
    items = {"s": repr(float(s)), **dims, **meta}
    header = "# " + " ".join(f"{k}={v}" for k, v in items.items())
    rows = values[None, :] if values.ndim == 1 else values
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_field(path):
    """Return (values, header dict). A 1D field is stored as a single row."""
    if not os.path.exists(path):
        raise MissingDataError(f"field file not found: {path}")
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
                continue
            rows.append([float(x) for x in line.split(",")])
    if not rows:
        raise MissingDataError(f"no data rows in {path}")
    arr = np.array(rows, dtype=float)
    if "ny" not in meta and arr.shape[0] == 1:
        arr = arr[0]
    return arr, meta


class SeriesWriter:
    """Appends monitor rows to series.csv, flushing after every row."""

    def __init__(self, path, append: bool = False):
        self.path = path
        exists = append and os.path.exists(path)
        self._fh = open(path, "a" if exists else "w", newline="")
        if not exists:
            self._fh.write(",".join(SERIES_COLUMNS) + "\n")
            self._fh.flush()

    def write(self, row):
        self._fh.write(",".join(repr(float(x)) for x in row) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def read_series(path) -> np.ndarray:
    if not os.path.exists(path):
        raise MissingDataError(f"series file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SERIES_COLUMNS:
            raise MissingDataError(f"unexpected series header in {path}")
        rows = [[float(x) for x in r] for r in reader if r]
    return np.array(rows, dtype=float).reshape(-1, len(SERIES_COLUMNS))


def truncate_series(path, s_max: float):
    """Drop rows with s > s_max (used before appending a resumed run)."""
    data = read_series(path)
    keep = data[data[:, 0] <= s_max]
    writer = SeriesWriter(path)
    for row in keep:
        writer.write(row)
    writer.close()
    return len(keep)
