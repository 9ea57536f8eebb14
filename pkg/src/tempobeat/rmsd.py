"""Root-mean-square deviation by weekday, hour and weekday x hour, and the
slot recommendation built on top of it.

Weekday figures compare daily means of observed and predicted values (one
deviation per calendar date); hour and weekday x hour figures use the raw
hourly rows.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .core import Weekday
from .errors import EmptyInput, LengthMismatch, MissingKeys, NoEligibleCells

AXES = ("weekday", "hour", "weekday_hour")


def rmsd(observed, predicted) -> float:
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape:
        raise LengthMismatch(f"{observed.size} observed vs {predicted.size} predicted values")
    if observed.size == 0:
        raise EmptyInput("rmsd of nothing")
    d = observed - predicted
    return float(np.sqrt(d @ d / d.size))


@dataclass(frozen=True)
class AxisSlice:
    axis: str
    values: np.ndarray  # NaN where the cell has no rows
    counts: np.ndarray
    overall: float  # RMSD over all units of this axis (days for weekday)
    n: int


def _cell_rmsd(diff, codes, n_cells):
    counts = np.bincount(codes, minlength=n_cells)
    ss = np.bincount(codes, weights=diff * diff, minlength=n_cells)
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, np.sqrt(ss / np.maximum(counts, 1)), np.nan)
    return values, counts


def decompose(observed, predicted, keys, axis) -> AxisSlice:
    observed = np.asarray(observed, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if observed.shape != predicted.shape:
        raise LengthMismatch(f"{observed.size} observed vs {predicted.size} predicted values")
    if observed.size == 0:
        raise EmptyInput("no rows to decompose")
    if keys is None or len(keys) != observed.size:
        raise MissingKeys("every row needs a calendar key")
    if axis == "weekday":
        days, inverse, per_day = np.unique(keys.date, return_inverse=True, return_counts=True)
        obs_mean = np.bincount(inverse, weights=observed) / per_day
        pred_mean = np.bincount(inverse, weights=predicted) / per_day
        weekday = (days.astype(np.int64) + 3) % 7
        diff = obs_mean - pred_mean
        values, counts = _cell_rmsd(diff, weekday, 7)
    elif axis == "hour":
        diff = observed - predicted
        values, counts = _cell_rmsd(diff, np.asarray(keys.hour), 24)
    elif axis == "weekday_hour":
        diff = observed - predicted
        values, counts = _cell_rmsd(diff, np.asarray(keys.weekday) * 24 + np.asarray(keys.hour), 168)
        values, counts = values.reshape(7, 24), counts.reshape(7, 24)
    else:
        raise ValueError(f"unknown axis {axis!r}")
    return AxisSlice(axis, values, counts, float(np.sqrt(diff @ diff / diff.size)), int(diff.size))


@dataclass(frozen=True)
class RmsdReport:
    model_tag: str
    overall: float
    n: int
    weekday: AxisSlice
    hour: AxisSlice
    weekday_hour: AxisSlice

    @property
    def by_weekday(self):
        return self.weekday.values

    @property
    def by_hour(self):
        return self.hour.values

    @property
    def by_weekday_hour(self):
        return self.weekday_hour.values

    def axis(self, name):
        return {"weekday": self.weekday, "hour": self.hour, "weekday_hour": self.weekday_hour,
                "grid": self.weekday_hour}[name]

    def to_dict(self):
        return {
            "model": self.model_tag,
            "overall": self.overall,
            "n": self.n,
            "overall_daily": self.weekday.overall,
            "n_days": self.weekday.n,
            "by_weekday": _listify(self.weekday.values),
            "weekday_counts": self.weekday.counts.tolist(),
            "by_hour": _listify(self.hour.values),
            "hour_counts": self.hour.counts.tolist(),
            "by_weekday_hour": [_listify(r) for r in self.weekday_hour.values],
            "weekday_hour_counts": self.weekday_hour.counts.tolist(),
        }


def _listify(values):
    return [None if not np.isfinite(v) else float(v) for v in values]


def rmsd_report(observed, predicted, keys, model_tag="empty") -> RmsdReport:
    slices = {axis: decompose(observed, predicted, keys, axis) for axis in AXES}
    return RmsdReport(model_tag, rmsd(observed, predicted), len(observed),
                      slices["weekday"], slices["hour"], slices["weekday_hour"])


def axis_csv(report: RmsdReport, axis) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    sl = report.axis(axis)
    if axis == "weekday":
        w.writerow(["weekday", "rmsd", "count"])
        for d in range(7):
            w.writerow([Weekday(d).label, _cell(sl.values[d]), int(sl.counts[d])])
    elif axis == "hour":
        w.writerow(["hour", "rmsd", "count"])
        for h in range(24):
            w.writerow([h, _cell(sl.values[h]), int(sl.counts[h])])
    else:
        w.writerow(["weekday", "hour", "rmsd", "count"])
        for d in range(7):
            for h in range(24):
                w.writerow([Weekday(d).label, h, _cell(sl.values[d, h]), int(sl.counts[d, h])])
    return buf.getvalue()


def _cell(v):
    return "" if not np.isfinite(v) else repr(float(v))


def read_axis_csv(text, axis):
    """Parse an axis CSV back into (values, counts) arrays."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if axis == "weekday":
        values, counts = np.full(7, np.nan), np.zeros(7, int)
        for r in rows:
            d = Weekday.parse(r["weekday"])
            values[d] = float(r["rmsd"]) if r["rmsd"] else np.nan
            counts[d] = int(r["count"])
    elif axis == "hour":
        values, counts = np.full(24, np.nan), np.zeros(24, int)
        for r in rows:
            h = int(r["hour"])
            values[h] = float(r["rmsd"]) if r["rmsd"] else np.nan
            counts[h] = int(r["count"])
    else:
        values, counts = np.full((7, 24), np.nan), np.zeros((7, 24), int)
        for r in rows:
            d, h = Weekday.parse(r["weekday"]), int(r["hour"])
            values[d, h] = float(r["rmsd"]) if r["rmsd"] else np.nan
            counts[d, h] = int(r["count"])
    return values, counts


@dataclass(frozen=True)
class Slot:
    weekday: Weekday
    hour: int
    rmsd: float
    count: int

    def to_dict(self):
        return {"weekday": self.weekday.label, "hour": self.hour, "rmsd": self.rmsd, "count": self.count}


@dataclass(frozen=True)
class Recommendation:
    slots: list
    best_weekday: Weekday
    best_hour: int
    models: tuple
    min_count: int

    @property
    def best_slot(self):
        return self.slots[0]

    def to_dict(self):
        return {
            "models": list(self.models),
            "min_count": self.min_count,
            "best_slot": self.best_slot.to_dict(),
            "best_weekday": self.best_weekday.label,
            "best_hour": self.best_hour,
            "ranked_slots": [s.to_dict() for s in self.slots],
        }

    def table(self, limit=10):
        lines = [f"{'rank':>4}  {'weekday':<9}  {'hour':>4}  {'rmsd':>10}  {'count':>5}"]
        for i, s in enumerate(self.slots[:limit], start=1):
            lines.append(f"{i:>4}  {s.weekday.label:<9}  {s.hour:>4}  {s.rmsd:>10.6f}  {s.count:>5}")
        lines.append(f"best weekday: {self.best_weekday.label}; best hour: {self.best_hour}")
        return "\n".join(lines)


def _mean_over_models(values_list, counts_list, min_count):
    values = np.stack(values_list)
    counts = np.stack(counts_list)
    ok = np.isfinite(values) & (counts >= min_count)
    n_ok = ok.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(n_ok > 0, np.where(ok, values, 0.0).sum(axis=0) / np.maximum(n_ok, 1), np.nan)
    count = np.where(ok, counts, 0).max(axis=0)
    return mean, count


def recommend(reports, min_count: int = 4) -> Recommendation:
    """Rank weekday x hour slots by the mean RMSD of the supplied models."""
    if isinstance(reports, RmsdReport):
        reports = [reports]
    reports = list(reports.values()) if isinstance(reports, dict) else list(reports)
    if not reports:
        raise NoEligibleCells("no RMSD reports supplied")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    grid, grid_count = _mean_over_models([r.weekday_hour.values for r in reports],
                                         [r.weekday_hour.counts for r in reports], min_count)
    cells = [(float(grid[d, h]), d, h) for d in range(7) for h in range(24) if np.isfinite(grid[d, h])]
    if not cells:
        raise NoEligibleCells(f"no weekday x hour cell has at least {min_count} rows")
    cells.sort()
    slots = [Slot(Weekday(d), h, v, int(grid_count[d, h])) for v, d, h in cells]

    def argmin(values_list, counts_list):
        mean, _ = _mean_over_models(values_list, counts_list, min_count)
        if not np.isfinite(mean).any():
            mean, _ = _mean_over_models(values_list, counts_list, 1)
        best = min((float(v), i) for i, v in enumerate(mean) if math.isfinite(v))
        return best[1]

    best_weekday = Weekday(argmin([r.weekday.values for r in reports], [r.weekday.counts for r in reports]))
    best_hour = argmin([r.hour.values for r in reports], [r.hour.counts for r in reports])
    return Recommendation(slots, best_weekday, int(best_hour), tuple(r.model_tag for r in reports), min_count)


def report_from_dict(data) -> RmsdReport:
    def arr(values):
        return np.array([np.nan if v is None else v for v in values], dtype=float)

    wd = AxisSlice("weekday", arr(data["by_weekday"]), np.array(data["weekday_counts"]),
                   data["overall_daily"], data["n_days"])
    hr = AxisSlice("hour", arr(data["by_hour"]), np.array(data["hour_counts"]), data["overall"], data["n"])
    grid = AxisSlice("weekday_hour", np.array([arr(r) for r in data["by_weekday_hour"]]),
                     np.array(data["weekday_hour_counts"]), data["overall"], data["n"])
    return RmsdReport(data["model"], data["overall"], data["n"], wd, hr, grid)
