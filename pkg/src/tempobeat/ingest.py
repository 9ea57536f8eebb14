"""CSV ingestion, hourly alignment and covariate engineering.

Three input files share one convention: UTF-8, comma separated, decimal
points, ISO-8601 stamps on the hour.

    observations.csv  timestamp,size_bytes[,row_count]
    weather.csv       timestamp,station,air_temp_c,precip_mm
    events.csv        start,end,category,all_day
"""
from __future__ import annotations

import configparser
import csv
import datetime as dt
import enum
import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    CalendarKeys,
    HourlyObservation,
    StandardizedSeries,
    as_hour_stamp,
    calendar_keys,
    flag_anomalies,
    format_stamp,
    standardize,
    to_hours,
)
from .errors import (
    CoverageGap,
    DuplicateStamp,
    GapTooLarge,
    InvalidConfig,
    InvertedSpan,
    NonHourStamp,
    ObservationGap,
    ParseError,
    UnknownCategory,
    UnknownStation,
)

ONE_HOUR = np.timedelta64(1, "h")
DEFAULT_STATIONS = ("malmo", "stockholm")

# Column order per station: levels and squares, then hour-on-hour changes and their squares.
WEATHER_TERMS = ("temp", "precip", "precip_sq", "temp_sq",
                 "dprecip", "dtemp", "dprecip_sq", "dtemp_sq")


class EventCategory(str, enum.Enum):
    SECULAR_HOLIDAY = "secular_holiday"
    RELIGIOUS_HOLIDAY = "religious_holiday"
    SPORTS = "sports"
    TV_MEDIA = "tv_media"
    WEATHER_TRANSPORT = "weather_transport"


EVENT_COLUMNS = tuple(c.value for c in EventCategory)


def weather_columns(stations):
    return tuple(f"{term}_{s}" for term in WEATHER_TERMS for s in stations)


@dataclass
class IngestConfig:
    timezone: str | None = None
    stations: tuple = DEFAULT_STATIONS
    obs_gap_policy: str = "error"
    weather_max_gap: int = 3
    anomaly_k: float = 2.0
    drop_anomalies: bool = False
    min_count: int = 4
    seed: int = 0

    def __post_init__(self):
        self.stations = tuple(normalize_station(s) for s in self.stations)
        if self.obs_gap_policy not in ("error", "zero", "interpolate"):
            raise InvalidConfig(f"unknown gap policy {self.obs_gap_policy!r}")
        if self.anomaly_k <= 0:
            raise InvalidConfig("anomaly threshold k must be positive")
        if not self.stations:
            raise InvalidConfig("at least one weather station is required")

    def snapshot(self):
        return {
            "timezone": self.timezone,
            "stations": list(self.stations),
            "obs_gap_policy": self.obs_gap_policy,
            "weather_max_gap": self.weather_max_gap,
            "anomaly_k": self.anomaly_k,
            "drop_anomalies": self.drop_anomalies,
            "min_count": self.min_count,
            "seed": self.seed,
        }


def load_config(path, **overrides) -> IngestConfig:
    """Read a ``[tempobeat]`` key-value config file; non-None overrides win."""
    values = {}
    if path is not None:
        parser = configparser.ConfigParser()
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
        if parser.has_section("tempobeat"):
            sec = parser["tempobeat"]
            for key in ("timezone", "obs_gap_policy"):
                if key in sec:
                    values[key] = sec[key].strip()
            if "stations" in sec:
                values["stations"] = tuple(s for s in sec["stations"].replace(" ", "").split(",") if s)
            try:
                if "weather_max_gap" in sec:
                    values["weather_max_gap"] = sec.getint("weather_max_gap")
                if "anomaly_k" in sec:
                    values["anomaly_k"] = sec.getfloat("anomaly_k")
                if "drop_anomalies" in sec:
                    values["drop_anomalies"] = sec.getboolean("drop_anomalies")
                if "min_count" in sec:
                    values["min_count"] = sec.getint("min_count")
                if "seed" in sec:
                    values["seed"] = sec.getint("seed")
            except ValueError as exc:
                raise InvalidConfig(f"{path}: {exc}") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    return IngestConfig(**values)


def normalize_station(name):
    return name.strip().lower()


def _open(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8", newline=""), str(source)
    return source, getattr(source, "name", None)


def _reader(source, required, optional=()):
    fh, name = _open(source)
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file", line=1, source=name) from None
    allowed = list(required) + list(optional)
    if header[: len(required)] != list(required) or any(h not in allowed for h in header):
        raise ParseError(f"expected header {','.join(required)}, got {','.join(header)}",
                         line=1, source=name)
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno, source=name)
        rows.append((lineno, dict(zip(header, (c.strip() for c in row)))))
    if fh is not source:
        fh.close()
    return rows, name


def parse_stamp(text, tz=None, line=None, source=None) -> dt.datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    try:
        stamp = dt.datetime.fromisoformat(text)
    except ValueError:
        raise ParseError(f"bad timestamp {text!r}", line=line, source=source) from None
    if stamp.tzinfo is not None:
        if tz is None:
            stamp = stamp.astimezone(dt.timezone.utc)
        else:
            from zoneinfo import ZoneInfo

            stamp = stamp.astimezone(ZoneInfo(tz))
        stamp = stamp.replace(tzinfo=None)
    try:
        return as_hour_stamp(stamp)
    except NonHourStamp:
        raise NonHourStamp(f"timestamp {text!r} has sub-hour precision", line=line,
                           source=source) from None


def _number(text, what, line, source):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"bad {what} {text!r}", line=line, source=source) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {what}", line=line, source=source)
    return value


def parse_observations(source, tz=None):
    """Parse an observations CSV into observations sorted by stamp."""
    rows, name = _reader(source, ("timestamp", "size_bytes"), ("row_count",))
    seen = {}
    out = []
    for line, row in rows:
        stamp = parse_stamp(row["timestamp"], tz, line, name)
        if stamp in seen:
            raise DuplicateStamp(f"hour {stamp.isoformat()} already given on line {seen[stamp]}",
                                 line=line, source=name)
        seen[stamp] = line
        value = _number(row["size_bytes"], "size_bytes", line, name)
        if value < 0:
            raise ParseError("size_bytes must be non-negative", line=line, source=name)
        count = None
        if row.get("row_count"):
            count = _number(row["row_count"], "row_count", line, name)
        out.append(HourlyObservation(stamp, value, count))
    out.sort(key=lambda o: o.stamp)
    return out


@dataclass(frozen=True)
class WeatherRow:
    stamp: dt.datetime
    station: str
    air_temp_c: float
    precip_mm: float


@dataclass(frozen=True)
class FillEntry:
    station: str
    stamp: dt.datetime
    columns: tuple


@dataclass(frozen=True)
class WeatherSeries:
    station: str
    stamps: np.ndarray
    temp: np.ndarray
    precip: np.ndarray

    def __len__(self):
        return len(self.stamps)


@dataclass(frozen=True)
class WeatherData:
    series: dict
    fills: list = field(default_factory=list)

    @property
    def stations(self):
        return tuple(self.series)


def _fill_runs(values, max_gap, station, column, stamps):
    """Linearly interpolate NaN runs in place; return indices that were filled."""
    missing = np.isnan(values)
    if not missing.any():
        return []
    filled = []
    i = 0
    n = len(values)
    while i < n:
        if not missing[i]:
            i += 1
            continue
        j = i
        while j < n and missing[j]:
            j += 1
        run = j - i
        first = format_stamp(stamps[i])
        if run > max_gap:
            raise GapTooLarge(f"station {station}: {run} consecutive missing {column} hours from {first}"
                              f" (limit {max_gap})")
        if i == 0 or j == n:
            raise GapTooLarge(f"station {station}: missing {column} at series edge {first}"
                              " cannot be interpolated")
        lo, hi = values[i - 1], values[j]
        for m in range(i, j):
            values[m] = lo + (hi - lo) * (m - i + 1) / (run + 1)
        filled.extend(range(i, j))
        i = j
    return filled


def parse_weather(source, stations=DEFAULT_STATIONS, tz=None, max_gap=3) -> WeatherData:
    """Parse weather rows into one gap-filled hourly series per station."""
    stations = tuple(normalize_station(s) for s in stations)
    rows, name = _reader(source, ("timestamp", "station", "air_temp_c", "precip_mm"))
    by_station = {s: {} for s in stations}
    for line, row in rows:
        station = normalize_station(row["station"])
        if station not in by_station:
            raise UnknownStation(f"{name or 'weather'}:{line}: station {row['station']!r} "
                                 f"is not configured ({', '.join(stations)})")
        stamp = parse_stamp(row["timestamp"], tz, line, name)
        if stamp in by_station[station]:
            raise DuplicateStamp(f"station {station} hour {stamp.isoformat()} given twice",
                                 line=line, source=name)
        temp = _number(row["air_temp_c"], "air_temp_c", line, name) if row["air_temp_c"] else math.nan
        precip = _number(row["precip_mm"], "precip_mm", line, name) if row["precip_mm"] else math.nan
        if not math.isnan(temp) and not -60.0 <= temp <= 60.0:
            raise ParseError(f"air temperature {temp} outside [-60, 60]", line=line, source=name)
        if not math.isnan(precip) and precip < 0:
            raise ParseError("precipitation must be non-negative", line=line, source=name)
        by_station[station][stamp] = (temp, precip)

    series = {}
    fills = {}
    for station, table in by_station.items():
        if not table:
            raise UnknownStation(f"configured station {station!r} has no rows in {name or 'weather'}")
        keys = sorted(table)
        start = np.datetime64(keys[0], "h")
        n = int((np.datetime64(keys[-1], "h") - start) / ONE_HOUR) + 1
        grid = start + np.arange(n) * ONE_HOUR
        temp = np.full(n, np.nan)
        precip = np.full(n, np.nan)
        for stamp, (t, p) in table.items():
            i = int((np.datetime64(stamp, "h") - start) / ONE_HOUR)
            temp[i], precip[i] = t, p
        for column, values in (("air_temp_c", temp), ("precip_mm", precip)):
            for i in _fill_runs(values, max_gap, station, column, grid):
                fills.setdefault((station, i), []).append(column)
        series[station] = WeatherSeries(station, grid, temp, precip)

    report = [
        FillEntry(station, series[station].stamps[i].astype(dt.datetime), tuple(cols))
        for (station, i), cols in sorted(fills.items(), key=lambda kv: (stations.index(kv[0][0]), kv[0][1]))
    ]
    return WeatherData(series, report)


@dataclass(frozen=True)
class EventRow:
    start: dt.datetime
    end: dt.datetime  # exclusive
    category: EventCategory
    all_day: bool = False

    @property
    def hours(self):
        return int((self.end - self.start) / dt.timedelta(hours=1))


def all_day_event(day: dt.date, category, last_day: dt.date | None = None) -> EventRow:
    last_day = last_day or day
    start = dt.datetime(day.year, day.month, day.day)
    end = dt.datetime(last_day.year, last_day.month, last_day.day) + dt.timedelta(days=1)
    return EventRow(start, end, EventCategory(category), True)


_TRUE = {"true", "1", "yes", "y", "t"}
_FALSE = {"false", "0", "no", "n", "f", ""}


def parse_events(source):
    """Parse the event calendar.

    All-day rows take a date in ``start`` and an optional inclusive last date
    in ``end``; span rows are half-open ``[start, end)`` hour intervals.
    """
    rows, name = _reader(source, ("start", "end", "category", "all_day"))
    out = []
    for line, row in rows:
        try:
            category = EventCategory(row["category"].strip().lower())
        except ValueError:
            raise UnknownCategory(f"unknown event category {row['category']!r}",
                                  line=line, source=name) from None
        flag = row["all_day"].strip().lower()
        if flag not in _TRUE | _FALSE:
            raise ParseError(f"all_day must be true/false, got {row['all_day']!r}", line=line, source=name)
        if flag in _TRUE:
            try:
                first = dt.date.fromisoformat(row["start"][:10])
                last = dt.date.fromisoformat(row["end"][:10]) if row["end"] else first
            except ValueError:
                raise ParseError("bad all-day date", line=line, source=name) from None
            if last < first:
                raise InvertedSpan("all-day event ends before it starts", line=line, source=name)
            out.append(all_day_event(first, category, last))
        else:
            if not row["end"]:
                raise ParseError("span events need an end stamp", line=line, source=name)
            start = parse_stamp(row["start"], None, line, name)
            end = parse_stamp(row["end"], None, line, name)
            if end <= start:
                raise InvertedSpan(f"event end {row['end']} is not after start {row['start']}",
                                   line=line, source=name)
            out.append(EventRow(start, end, category, False))
    return out


@dataclass(frozen=True)
class CovariateTable:
    stamps: np.ndarray
    names: tuple
    values: np.ndarray  # (n_hours, n_columns)

    def __len__(self):
        return len(self.stamps)

    def column(self, name):
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def event_columns(self):
        return tuple(n for n in self.names if n in EVENT_COLUMNS)

    def check(self):
        """Verify dummy and squared-column consistency; raise ValueError if broken."""
        for name in self.event_columns():
            col = self.column(name)
            if not np.all((col == 0) | (col == 1)):
                raise ValueError(f"dummy column {name} is not 0/1")
        for name in self.names:
            if name.split("_", 1)[0] in ("temp", "precip", "dtemp", "dprecip") and "_sq_" not in name:
                term, station = name.split("_", 1)
                sq = f"{term}_sq_{station}"
                if sq in self.names and not np.array_equal(self.column(sq), self.column(name) ** 2):
                    raise ValueError(f"{sq} is not the square of {name}")
                if term.startswith("d") and len(self) and self.column(name)[0] != 0:
                    raise ValueError(f"{name} does not start at 0")


def event_dummies(events, grid):
    grid = to_hours(grid)
    out = np.zeros((len(grid), len(EVENT_COLUMNS)))
    if len(grid) == 0:
        return out
    start = grid[0]
    n = len(grid)
    for ev in events or ():
        lo = int((np.datetime64(ev.start, "h") - start) / ONE_HOUR)
        hi = int((np.datetime64(ev.end, "h") - start) / ONE_HOUR)
        lo, hi = max(lo, 0), min(hi, n)
        if lo < hi:
            out[lo:hi, EVENT_COLUMNS.index(EventCategory(ev.category).value)] = 1.0
    return out


def _check_contiguous(grid):
    if len(grid) > 1 and not np.all(np.diff(grid) == ONE_HOUR):
        raise CoverageGap("covariate grid must be a contiguous hourly range")


def engineer_covariates(weather, events, grid) -> CovariateTable:
    """Event dummies plus, per station, raw/squared/differenced weather terms."""
    grid = to_hours(grid)
    _check_contiguous(grid)
    names = list(EVENT_COLUMNS)
    blocks = [event_dummies(events, grid)]
    if weather is not None:
        series = weather.series if isinstance(weather, WeatherData) else weather
        stations = tuple(series)
        raw = {}
        for station in stations:
            ws = series[station]
            if len(grid) == 0:
                raw[station] = (np.zeros(0), np.zeros(0))
                continue
            lo = int((grid[0] - ws.stamps[0]) / ONE_HOUR)
            hi = lo + len(grid)
            if lo < 0 or hi > len(ws):
                raise CoverageGap(f"weather for station {station} covers {format_stamp(ws.stamps[0])}"
                                  f" to {format_stamp(ws.stamps[-1])}, grid needs "
                                  f"{format_stamp(grid[0])} to {format_stamp(grid[-1])}")
            raw[station] = (ws.temp[lo:hi].copy(), ws.precip[lo:hi].copy())
        cols = {}
        for station, (temp, precip) in raw.items():
            dtemp = np.diff(temp, prepend=temp[:1]) if len(temp) else temp
            dprecip = np.diff(precip, prepend=precip[:1]) if len(precip) else precip
            terms = {
                "temp": temp, "precip": precip,
                "precip_sq": precip ** 2, "temp_sq": temp ** 2,
                "dprecip": dprecip, "dtemp": dtemp,
                "dprecip_sq": dprecip ** 2, "dtemp_sq": dtemp ** 2,
            }
            for term, values in terms.items():
                cols[f"{term}_{station}"] = values
        wnames = weather_columns(stations)
        names.extend(wnames)
        blocks.append(np.column_stack([cols[n] for n in wnames]) if wnames else np.zeros((len(grid), 0)))
    values = np.hstack(blocks) if blocks else np.zeros((len(grid), 0))
    return CovariateTable(grid, tuple(names), values)


@dataclass(frozen=True)
class AnalysisDataset:
    grid: np.ndarray
    raw: np.ndarray
    y: StandardizedSeries
    covariates: CovariateTable
    row_count: np.ndarray | None = None
    excluded: np.ndarray | None = None  # rows screened out of model fitting
    fills: tuple = ()
    stations: tuple = ()
    events: tuple = ()

    def __len__(self):
        return len(self.grid)

    @property
    def keys(self) -> CalendarKeys:
        return calendar_keys(self.grid)

    @property
    def z(self):
        return self.y.z


def _apply_gap_policy(obs, policy):
    stamps = to_hours([o.stamp for o in obs])
    values = np.array([o.value for o in obs], dtype=float)
    counts = [o.row_count for o in obs]
    has_counts = all(c is not None for c in counts)
    counts = np.array(counts, dtype=float) if has_counts else None
    n = int((stamps[-1] - stamps[0]) / ONE_HOUR) + 1
    if n == len(stamps):
        return stamps, values, counts
    grid = stamps[0] + np.arange(n) * ONE_HOUR
    missing = np.setdiff1d(grid, stamps)
    if policy == "error":
        raise ObservationGap([format_stamp(m) for m in missing])
    pos = ((stamps - stamps[0]) / ONE_HOUR).astype(int)
    full = np.full(n, np.nan)
    full[pos] = values
    full_counts = None
    if counts is not None:
        full_counts = np.full(n, np.nan)
        full_counts[pos] = counts
    for arr in (full, full_counts):
        if arr is None:
            continue
        gaps = np.isnan(arr)
        if policy == "zero":
            arr[gaps] = 0.0
        else:
            arr[gaps] = np.interp(np.flatnonzero(gaps), pos, arr[pos])
    return grid, full, full_counts


def assemble_dataset(obs, weather=None, events=None, config: IngestConfig | None = None) -> AnalysisDataset:
    """Join observations, weather and events on the observation hour grid."""
    config = config or IngestConfig()
    obs = sorted(obs, key=lambda o: o.stamp)
    if not obs:
        from .errors import EmptySeries

        raise EmptySeries("no observations")
    grid, values, counts = _apply_gap_policy(obs, config.obs_gap_policy)
    y = standardize(values, stamps=grid)
    covariates = engineer_covariates(weather, events, grid)
    excluded = None
    if config.drop_anomalies:
        flagged = {np.datetime64(s, "h") for s, _ in flag_anomalies(y, config.anomaly_k)}
        excluded = np.array([g in flagged for g in grid], dtype=bool)
    fills = tuple(weather.fills) if isinstance(weather, WeatherData) else ()
    stations = tuple(weather.series) if isinstance(weather, WeatherData) else tuple(weather or ())
    return AnalysisDataset(grid, values, y, covariates, counts, excluded, fills, stations,
                           tuple(events or ()))


# -- canonical bundle -------------------------------------------------------

BUNDLE_DATA = "dataset.csv"
BUNDLE_META = "dataset.json"


def _fmt(x):
    return repr(float(x))


def write_bundle(dataset: AnalysisDataset, directory):
    """Write the canonical bundle; floats are written with round-trip repr."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = ["timestamp", "value"]
    if dataset.row_count is not None:
        header.append("row_count")
    header += ["z", "excluded", *dataset.covariates.names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    excluded = dataset.excluded if dataset.excluded is not None else np.zeros(len(dataset), bool)
    for i, stamp in enumerate(dataset.grid):
        row = [format_stamp(stamp), _fmt(dataset.raw[i])]
        if dataset.row_count is not None:
            row.append(_fmt(dataset.row_count[i]))
        row += [_fmt(dataset.y.z[i]), "1" if excluded[i] else "0"]
        row += [_fmt(v) for v in dataset.covariates.values[i]]
        w.writerow(row)
    (directory / BUNDLE_DATA).write_text(buf.getvalue(), encoding="utf-8")
    meta = {
        "format": "tempobeat-dataset/1",
        "version": __version__,
        "mean": dataset.y.mean,
        "sd": dataset.y.sd,
        "n_rows": len(dataset),
        "stations": list(dataset.stations),
        "covariates": list(dataset.covariates.names),
        "has_excluded": dataset.excluded is not None,
        "weather_fills": [
            {"station": f.station, "timestamp": f.stamp.isoformat(timespec="minutes"),
             "columns": list(f.columns)} for f in dataset.fills
        ],
        "events": [
            {"start": e.start.isoformat(timespec="minutes"), "end": e.end.isoformat(timespec="minutes"),
             "category": EventCategory(e.category).value, "all_day": e.all_day}
            for e in dataset.events
        ],
    }
    (directory / BUNDLE_META).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return [directory / BUNDLE_DATA, directory / BUNDLE_META]


def read_bundle(directory) -> AnalysisDataset:
    directory = Path(directory)
    meta = json.loads((directory / BUNDLE_META).read_text(encoding="utf-8"))
    with open(directory / BUNDLE_DATA, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    idx = {h: i for i, h in enumerate(header)}
    names = tuple(meta["covariates"])
    grid = to_hours([r[0] for r in rows])
    raw = np.array([float(r[idx["value"]]) for r in rows])
    counts = np.array([float(r[idx["row_count"]]) for r in rows]) if "row_count" in idx else None
    z = np.array([float(r[idx["z"]]) for r in rows])
    excluded = np.array([r[idx["excluded"]] == "1" for r in rows]) if meta.get("has_excluded") else None
    cov = np.array([[float(r[idx[n]]) for n in names] for r in rows]).reshape(len(rows), len(names))
    y = StandardizedSeries(grid, z, meta["mean"], meta["sd"])
    fills = tuple(FillEntry(f["station"], dt.datetime.fromisoformat(f["timestamp"]), tuple(f["columns"]))
                  for f in meta.get("weather_fills", []))
    events = tuple(EventRow(dt.datetime.fromisoformat(e["start"]), dt.datetime.fromisoformat(e["end"]),
                            EventCategory(e["category"]), e["all_day"]) for e in meta.get("events", []))
    return AnalysisDataset(grid, raw, y, CovariateTable(grid, names, cov), counts, excluded, fills,
                           tuple(meta.get("stations", [])), events)


def with_excluded(dataset: AnalysisDataset, excluded) -> AnalysisDataset:
    return replace(dataset, excluded=np.asarray(excluded, dtype=bool))
