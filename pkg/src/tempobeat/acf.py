"""Lagged autocorrelation and the four correlogram presets.

The estimator sums the numerator over the first ``N - h`` deviations but the
denominator over all ``N``, which keeps ``|r_h| <= 1``.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from .core import to_hours, zscore
from .errors import DegenerateSeries, InsufficientDays, LagOutOfRange

ONE_HOUR = np.timedelta64(1, "h")


@dataclass(frozen=True)
class AcfSeries:
    lag_unit: str
    lag_step: int
    lags: np.ndarray
    r: np.ndarray

    def rows(self):
        return list(zip(self.lags.tolist(), self.r.tolist()))


@dataclass(frozen=True)
class Preset:
    name: str
    lag_unit: str
    lag_step: int
    max_lag: int
    title: str


PRESETS = {
    "hour_step1": Preset("hour_step1", "hour", 1, 24, "hours, step 1 hour"),
    "hour_step24": Preset("hour_step24", "hour", 24, 480, "hours, step 1 day"),
    "day_step1": Preset("day_step1", "day", 1, 30, "days, step 1 day"),
    "day_step7": Preset("day_step7", "day", 7, 210, "days, step 1 week"),
}


def _deviations(z):
    z = np.asarray(z, dtype=float)
    dev = z - z.mean()
    denom = float(dev @ dev)
    if denom == 0.0:
        raise DegenerateSeries("autocorrelation of a constant series is undefined")
    return dev, denom


def acf_at_lag(z, h: int) -> float:
    z = np.asarray(z, dtype=float)
    n = len(z)
    if not 0 <= h < n:
        raise LagOutOfRange(f"lag {h} outside [0, {n})")
    dev, denom = _deviations(z)
    if h == 0:
        return 1.0
    return float(dev[: n - h] @ dev[h:]) / denom


def correlogram(z, lag_unit="hour", lag_step=1, max_lag=24) -> AcfSeries:
    z = np.asarray(z, dtype=float)
    n = len(z)
    if lag_step < 1:
        raise ValueError("lag_step must be >= 1")
    if not 0 <= max_lag < n:
        raise LagOutOfRange(f"max lag {max_lag} outside [0, {n})")
    dev, denom = _deviations(z)
    lags = np.arange(lag_step, max_lag + 1, lag_step)
    r = np.array([dev[: n - h] @ dev[h:] for h in lags]) / denom
    return AcfSeries(lag_unit, int(lag_step), lags, r)


def preset_correlogram(name, hourly_z, daily_z, max_lag=None) -> AcfSeries:
    p = PRESETS[name]
    z = hourly_z if p.lag_unit == "hour" else daily_z
    return correlogram(z, p.lag_unit, p.lag_step, p.max_lag if max_lag is None else max_lag)


@dataclass(frozen=True)
class DailySeries:
    dates: np.ndarray  # datetime64[D]
    totals: np.ndarray
    z: np.ndarray
    mean: float
    sd: float
    trimmed: tuple  # partial dates left out, as ISO strings


def aggregate_daily(stamps, values=None) -> DailySeries:
    """Sum complete days of hourly values and standardize over days.

    Accepts either a list of HourlyObservation or parallel stamp/value arrays.
    """
    if values is None:
        obs = list(stamps)
        stamps = [o.stamp for o in obs]
        values = [o.value for o in obs]
    hours = to_hours(stamps)
    values = np.asarray(values, dtype=float)
    days = hours.astype("datetime64[D]")
    unique, inverse, counts = np.unique(days, return_inverse=True, return_counts=True)
    # hours repeated within a day would inflate counts; require 24 distinct hours
    distinct = np.array([len(np.unique(hours[days == d])) for d in unique]) if len(unique) else counts
    complete = distinct == 24
    totals = np.bincount(inverse, weights=values, minlength=len(unique))[complete]
    kept = unique[complete]
    trimmed = tuple(str(d) for d in unique[~complete])
    if len(kept) < 2:
        raise InsufficientDays(f"need at least 2 complete days, got {len(kept)}")
    z, mean, sd = zscore(totals)
    return DailySeries(kept, totals, z, mean, sd, trimmed)


def date_of(d) -> dt.date:
    return np.datetime64(d, "D").astype(dt.date)
