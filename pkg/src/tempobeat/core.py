"""Core data types: hour stamps, calendar keys, z-scores, anomaly screening,
proxy validation and summary profiles.

Timestamps are naive wall-clock hours in the dataset's configured zone.
Series-level code carries them as ``numpy.datetime64[h]`` arrays; single
stamps cross the public API as :class:`datetime.datetime`.
"""
from __future__ import annotations

import datetime as dt
import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSeries,
    EmptySeries,
    InsufficientSpan,
    LengthMismatch,
    NonHourStamp,
)

HOURS_PER_WEEK = 168
HIST_WIDTH = 0.25
HIST_LIMIT = 4.0


class Weekday(enum.IntEnum):
    MON = 0
    TUE = 1
    WED = 2
    THU = 3
    FRI = 4
    SAT = 5
    SUN = 6

    @property
    def label(self):
        return ("Monday", "Tuesday", "Wednesday", "Thursday",
                "Friday", "Saturday", "Sunday")[self.value]

    @classmethod
    def parse(cls, text):
        text = str(text).strip().lower()
        for day in cls:
            if text in (day.name.lower(), day.label.lower(), str(day.value)):
                return day
        raise ValueError(f"not a weekday: {text!r}")


def as_hour_stamp(value) -> dt.datetime:
    """Coerce to a naive, hour-truncated datetime; raise NonHourStamp otherwise."""
    if isinstance(value, np.datetime64):
        value = value.astype("datetime64[s]").astype(dt.datetime)
    elif isinstance(value, str):
        value = dt.datetime.fromisoformat(value)
    elif isinstance(value, dt.date) and not isinstance(value, dt.datetime):
        value = dt.datetime(value.year, value.month, value.day)
    if value.minute or value.second or value.microsecond:
        raise NonHourStamp(f"timestamp {value.isoformat()} is not on the hour")
    return value.replace(tzinfo=None)


def to_hours(stamps) -> np.ndarray:
    """Array of hour stamps as ``datetime64[h]``."""
    return np.asarray(stamps, dtype="datetime64[h]")


def format_stamp(stamp) -> str:
    return str(np.datetime64(stamp, "h")) + ":00"


@dataclass(frozen=True)
class CalendarKey:
    hour_of_day: int
    weekday: Weekday
    date: dt.date
    month_year: str


@dataclass(frozen=True)
class CalendarKeys:
    """Column-wise calendar decomposition of a stamp array."""

    hour: np.ndarray
    weekday: np.ndarray
    date: np.ndarray  # datetime64[D]
    month_year: np.ndarray  # datetime64[M]

    def __len__(self):
        return len(self.hour)

    def __getitem__(self, i):
        return CalendarKey(
            int(self.hour[i]),
            Weekday(int(self.weekday[i])),
            self.date[i].astype(dt.date),
            str(self.month_year[i]),
        )

    def take(self, index):
        return CalendarKeys(self.hour[index], self.weekday[index],
                            self.date[index], self.month_year[index])


def calendar_key(stamp) -> CalendarKey:
    stamp = as_hour_stamp(stamp)
    return CalendarKey(
        hour_of_day=stamp.hour,
        weekday=Weekday(stamp.weekday()),
        date=stamp.date(),
        month_year=f"{stamp.year:04d}-{stamp.month:02d}",
    )


def calendar_keys(stamps) -> CalendarKeys:
    hours = to_hours(stamps)
    days = hours.astype("datetime64[D]")
    hour = (hours - days.astype("datetime64[h]")).astype(np.int64)
    # 1970-01-01 was a Thursday
    weekday = (days.astype(np.int64) + 3) % 7
    return CalendarKeys(hour, weekday, days, days.astype("datetime64[M]"))


@dataclass(frozen=True)
class HourlyObservation:
    stamp: dt.datetime
    value: float
    row_count: float | None = None

    @property
    def key(self) -> CalendarKey:
        return calendar_key(self.stamp)


@dataclass(frozen=True)
class StandardizedSeries:
    stamps: np.ndarray
    z: np.ndarray
    mean: float
    sd: float

    def __len__(self):
        return len(self.z)

    @property
    def observations(self):
        return [(s.astype(dt.datetime), float(v)) for s, v in zip(self.stamps, self.z)]

    @property
    def keys(self) -> CalendarKeys:
        return calendar_keys(self.stamps)

    def inverse(self) -> np.ndarray:
        return self.z * self.sd + self.mean


def zscore(values):
    """Population z-scores; returns ``(z, mean, sd)``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptySeries("no observations")
    mean = float(values.mean())
    sd = float(values.std())
    if sd == 0.0 or not np.isfinite(sd):
        raise DegenerateSeries("series has zero variance")
    return (values - mean) / sd, mean, sd


def standardize(series, stamps=None) -> StandardizedSeries:
    """Standardize observations with the whole-series population mean and sd.

    ``series`` is either a sequence of :class:`HourlyObservation` or a plain
    array of values, optionally with ``stamps`` (consecutive hours from the
    epoch when omitted).
    """
    series = list(series) if not isinstance(series, np.ndarray) else series
    if len(series) == 0:
        raise EmptySeries("no observations")
    if isinstance(series[0], HourlyObservation):
        stamps = [o.stamp for o in series]
        values = [o.value for o in series]
    else:
        values = np.asarray(series, dtype=float)
        if stamps is None:
            stamps = np.datetime64(0, "h") + np.arange(values.size)
        elif len(stamps) != values.size:
            raise LengthMismatch(f"{values.size} values vs {len(stamps)} stamps")
    z, mean, sd = zscore(values)
    return StandardizedSeries(to_hours(stamps), z, mean, sd)


def flag_anomalies(series: StandardizedSeries, k: float = 2.0):
    """Hours with ``|z| > k``, largest first; ties keep the earlier stamp."""
    if not k > 0:
        raise ValueError("k must be positive")
    idx = np.flatnonzero(np.abs(series.z) > k)
    # stable sort on -|z| keeps chronological order among ties
    idx = idx[np.argsort(-np.abs(series.z[idx]), kind="stable")]
    return [(series.stamps[i].astype(dt.datetime), float(series.z[i])) for i in idx]


def proxy_r2(sizes, counts) -> float:
    """R² of the least-squares line predicting sizes from row counts."""
    sizes = np.asarray(sizes, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if sizes.shape != counts.shape or sizes.ndim != 1 or sizes.size < 3:
        raise LengthMismatch(
            f"need two equal-length series of at least 3 values, got {sizes.size} and {counts.size}")
    if np.ptp(sizes) == 0 or np.ptp(counts) == 0:
        raise DegenerateSeries("proxy series is constant")
    ds = sizes - sizes.mean()
    dc = counts - counts.mean()
    r2 = (ds @ dc) ** 2 / ((ds @ ds) * (dc @ dc))
    return float(min(max(r2, 0.0), 1.0))


@dataclass(frozen=True)
class ProfileBundle:
    by_hour: np.ndarray
    hour_counts: np.ndarray
    by_weekday: np.ndarray
    weekday_counts: np.ndarray
    week: np.ndarray  # (7, 24)
    week_counts: np.ndarray
    hist_edges: np.ndarray
    # first bin is (-inf, -4), last is [4, inf)
    hist_counts: np.ndarray = field(repr=False)

    @property
    def week_trajectory(self):
        return self.week.reshape(-1)


def histogram_edges():
    n = int(round(2 * HIST_LIMIT / HIST_WIDTH))
    return np.linspace(-HIST_LIMIT, HIST_LIMIT, n + 1)


def summary_profiles(series: StandardizedSeries) -> ProfileBundle:
    stamps = series.stamps
    if len(stamps) == 0:
        raise EmptySeries("no observations")
    span = int((stamps.max() - stamps.min()).astype(np.int64)) + 1
    if span < HOURS_PER_WEEK:
        raise InsufficientSpan(f"series spans {span} hours, need at least one week")
    keys = series.keys
    z = series.z

    def means(codes, n):
        counts = np.bincount(codes, minlength=n)
        sums = np.bincount(codes, weights=z, minlength=n)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan), counts

    by_hour, hour_counts = means(keys.hour, 24)
    by_weekday, weekday_counts = means(keys.weekday, 7)
    week, week_counts = means(keys.weekday * 24 + keys.hour, HOURS_PER_WEEK)

    edges = histogram_edges()
    inner = np.histogram(np.clip(z, -HIST_LIMIT, HIST_LIMIT), bins=edges)[0]
    under = int(np.sum(z < -HIST_LIMIT))
    over = int(np.sum(z >= HIST_LIMIT))
    # values clipped into the outer inner bins must move to the overflow bins
    inner[0] -= under
    inner[-1] -= over
    hist = np.concatenate([[under], inner, [over]])
    return ProfileBundle(by_hour, hour_counts, by_weekday, weekday_counts,
                         week.reshape(7, 24), week_counts.reshape(7, 24), edges, hist)
