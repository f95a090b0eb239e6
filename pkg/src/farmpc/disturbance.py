"""Exterior weather series and the disturbance preview fed to the controller."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

WEATHER_HEADER = ("time_s", "T_out_C", "C_out_kg_m3", "H_out_kg_m3")


class WeatherFormatError(ValueError):
    """Malformed weather file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True, eq=False)
class WeatherSeries:
    """Uniformly sampled exterior climate, one row (T_out, C_out, H_out) per sample."""

    start_time: float
    sample_interval: float
    records: np.ndarray

    def __post_init__(self):
        records = np.array(self.records, dtype=float, copy=True)
        if records.ndim != 2 or records.shape[1] != 3 or len(records) == 0:
            raise ValueError("weather records must be a non-empty (n, 3) array")
        if not self.sample_interval > 0:
            raise ValueError("sample interval must be positive")
        if not np.all(np.isfinite(records)):
            raise ValueError("weather records must be finite")
        if np.any(records[:, 1:] < 0):
            raise ValueError("C_out and H_out must be non-negative")
        records.setflags(write=False)
        object.__setattr__(self, "records", records)

    def __len__(self):
        return len(self.records)

    @property
    def end_time(self):
        return self.start_time + (len(self.records) - 1) * self.sample_interval

    def with_C_out(self, value):
        """Copy with the CO2 column replaced by a constant source concentration."""
        records = self.records.copy()
        records[:, 1] = value
        return replace(self, records=records)

    def at(self, t):
        """Zero-order-hold value at time `t`; past the end the last record is held."""
        if t < self.start_time:
            raise ValueError(f"time {t} precedes the weather series start {self.start_time}")
        idx = int(math.floor((t - self.start_time) / self.sample_interval + 1e-9))
        if idx >= len(self.records):
            logger.warning("weather series ends at t=%g s; holding last value for t=%g s",
                           self.end_time, t)
            idx = len(self.records) - 1
        return self.records[idx]


def load_weather_csv(path):
    """Read a weather CSV with header ``time_s,T_out_C,C_out_kg_m3,H_out_kg_m3``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"weather file not found: {path}")
    times, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise WeatherFormatError("no records")
        if tuple(h.strip() for h in header) != WEATHER_HEADER:
            raise WeatherFormatError(f"expected header {','.join(WEATHER_HEADER)}", line=1)
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise WeatherFormatError(f"expected 4 columns, got {len(row)}", line=line)
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise WeatherFormatError("non-numeric value", line=line) from None
            if not all(math.isfinite(v) for v in values):
                raise WeatherFormatError("non-finite value", line=line)
            if values[2] < 0 or values[3] < 0:
                raise WeatherFormatError("negative concentration", line=line)
            times.append(values[0])
            rows.append(values[1:])
    if not rows:
        raise WeatherFormatError("no records")
    times = np.array(times)
    if len(times) == 1:
        interval = 3600.0
    else:
        steps = np.diff(times)
        interval = steps[0]
        if interval <= 0:
            raise WeatherFormatError("times must be strictly increasing", line=3)
        bad = np.flatnonzero(~np.isclose(steps, interval, rtol=1e-9, atol=1e-9))
        if len(bad):
            raise WeatherFormatError("non-uniform sample spacing", line=int(bad[0]) + 3)
    return WeatherSeries(float(times[0]), float(interval), np.array(rows))


def preview(series, t_k, N, dt):
    """Disturbances at t_k + i dt for i = 0..N, shape (N + 1, 3).

    Because every entry is a pure function of its own time stamp, the preview
    at t_k + dt is the preview at t_k shifted by one with a new last sample.
    """
    if N < 0:
        raise ValueError("horizon must be non-negative")
    return np.array([series.at(t_k + i * dt) for i in range(N + 1)])
