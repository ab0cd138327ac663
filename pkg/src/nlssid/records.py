"""Sampled input/output records and their CSV file format.

The on-disk layout is a plain CSV with header ``t,u1..u{n_u},y1..y{n_y}``,
one row per sample, time in seconds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DataFormatError


def as_channels(arr, name: str) -> np.ndarray:
    """Coerce a sequence to a float (N, n_channels) array.

    1-D input is treated as a single channel.
    """
    out = np.asarray(arr, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.ndim != 2:
        raise DataError(f"{name} must be 1-D or 2-D, got ndim={out.ndim}")
    return out


@dataclass
class IoRecord:
    """One input/output measurement record.

    u, y are time-major arrays of shape (N, n_u) and (N, n_y).
    """

    u: np.ndarray
    y: np.ndarray
    sample_period: float = 1.0
    role: str = "estimation"

    def __post_init__(self):
        self.u = as_channels(self.u, "u")
        self.y = as_channels(self.y, "y")
        if len(self.u) != len(self.y):
            raise DataError(
                f"u and y must have equal length, got {len(self.u)} and {len(self.y)}"
            )
        if len(self.u) < 2:
            raise DataError(f"record needs at least 2 samples, got {len(self.u)}")
        if not np.isfinite(self.u).all():
            raise DataError("u contains non-finite values")
        if not np.isfinite(self.y).all():
            raise DataError("y contains non-finite values")
        if not self.sample_period > 0:
            raise DataError(f"sample_period must be positive, got {self.sample_period}")
        if self.role not in ("estimation", "validation"):
            raise DataError(f"role must be 'estimation' or 'validation', got {self.role!r}")

    @property
    def n_samples(self) -> int:
        return len(self.u)

    @property
    def n_u(self) -> int:
        return self.u.shape[1]

    @property
    def n_y(self) -> int:
        return self.y.shape[1]


def save_record_csv(path, record: IoRecord) -> None:
    """Write a record in the ``t,u1..,y1..`` CSV layout."""
    header = (
        ["t"]
        + [f"u{i + 1}" for i in range(record.n_u)]
        + [f"y{i + 1}" for i in range(record.n_y)]
    )
    t = np.arange(record.n_samples) * record.sample_period
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for k in range(record.n_samples):
            writer.writerow(
                [repr(float(t[k]))]
                + [repr(float(v)) for v in record.u[k]]
                + [repr(float(v)) for v in record.y[k]]
            )


def load_record_csv(path, role: str = "estimation") -> IoRecord:
    """Read a record written by :func:`save_record_csv`.

    Raises :class:`DataFormatError` with the offending line number on
    malformed input.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file", line=1) from None
        header = [h.strip() for h in header]
        if not header or header[0] != "t":
            raise DataFormatError("header must start with 't'", line=1)
        n_u = sum(1 for h in header if h.startswith("u"))
        n_y = sum(1 for h in header if h.startswith("y"))
        if n_u == 0 or n_y == 0 or 1 + n_u + n_y != len(header):
            raise DataFormatError(
                f"header must be t,u1..u{{n_u}},y1..y{{n_y}}, got {header}", line=1
            )
        t_vals, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} columns, got {len(row)}", line=lineno
                )
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise DataFormatError(f"non-numeric value: {exc}", line=lineno) from None
            t_vals.append(vals[0])
            rows.append(vals[1:])
    if len(rows) < 2:
        raise DataFormatError("need at least 2 data rows", line=len(rows) + 1)
    data = np.array(rows)
    dt = t_vals[1] - t_vals[0]
    if dt <= 0:
        raise DataFormatError("time column must be strictly increasing", line=3)
    return IoRecord(u=data[:, :n_u], y=data[:, n_u:], sample_period=dt, role=role)
