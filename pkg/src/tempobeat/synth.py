"""Seeded generator of hourly activity data with known variance components.

The activity level follows

    y = b0 + sum_n b_n x_n + month_year + date + hour_of_day + weekday + season + e

with normal random intercepts, normal residuals scaled per weekday/hour
(and optionally on event hours), and weather covariates engineered exactly
as ingest does.  Raw "file sizes" are ``round(base + scale * y)``.

Random streams come from numpy's PCG64 bit generator, one child
``SeedSequence`` per stream; the algorithm name is written into
``truth.json`` so a dataset can be regenerated later.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .core import calendar_keys, format_stamp, standardize
from .errors import InvalidConfig
from .ingest import (
    DEFAULT_STATIONS,
    EVENT_COLUMNS,
    AnalysisDataset,
    EventCategory,
    EventRow,
    WeatherData,
    WeatherSeries,
    all_day_event,
    engineer_covariates,
)
from .mlm.design import COMPONENTS, FACTORS

PRNG = "numpy.random.PCG64"

# Empty-model estimates reported for the phone data; their shares are
# 83.9 / 4.3 / 7.9 / 3.9 percent of a 0.996 total.
REFERENCE_SIGMA2 = {"hour": 0.8357, "day": 0.0433, "month_year": 0.0782, "residual": 0.0390}
# Full-model event coefficients, standardized units.
REFERENCE_EVENT_EFFECTS = {
    "secular_holiday": -0.1220,
    "religious_holiday": -0.1616,
    "sports": 0.0316,
    "tv_media": 0.0349,
    "weather_transport": 0.0032,
}

_STREAMS = ("hour", "day", "month_year", "residual", "weather", "events", "proxy")


@dataclass
class SynthConfig:
    start: dt.date = dt.date(2018, 1, 1)
    end: dt.date = dt.date(2019, 5, 31)  # inclusive
    sigma2: dict = field(default_factory=lambda: dict(REFERENCE_SIGMA2))
    intercept: float = 0.0
    events: tuple = ()
    event_effects: dict = field(default_factory=dict)
    event_noise: float = 1.0
    weather_effects: dict = field(default_factory=dict)
    stations: tuple = DEFAULT_STATIONS
    weekday_effects: tuple = (0.0,) * 7
    weekday_noise_multipliers: tuple = (1.0,) * 7
    hour_noise_multipliers: tuple = (1.0,) * 24
    seasonal_amplitude: float = 0.0
    seasonal_peak_day: int = 196  # day of year of the annual maximum
    intercept_sampling: str = "iid"  # or "stratified"
    base_size: float = 5.0e8
    size_scale: float = 5.0e7
    seed: int = 0

    def validate(self):
        if self.end < self.start:
            raise InvalidConfig("span end precedes start")
        missing = set(COMPONENTS) - set(self.sigma2)
        if missing:
            raise InvalidConfig(f"sigma2 missing components: {', '.join(sorted(missing))}")
        if any(v < 0 for v in self.sigma2.values()):
            raise InvalidConfig("variance components must be non-negative")
        if len(self.weekday_noise_multipliers) != 7 or min(self.weekday_noise_multipliers) <= 0:
            raise InvalidConfig("need 7 positive weekday noise multipliers")
        if len(self.hour_noise_multipliers) != 24 or min(self.hour_noise_multipliers) <= 0:
            raise InvalidConfig("need 24 positive hour noise multipliers")
        if len(self.weekday_effects) != 7:
            raise InvalidConfig("need 7 weekday effects")
        if self.event_noise <= 0:
            raise InvalidConfig("event noise multiplier must be positive")
        if self.intercept_sampling not in ("iid", "stratified"):
            raise InvalidConfig(f"unknown intercept sampling {self.intercept_sampling!r}")
        for cat in self.event_effects:
            try:
                EventCategory(cat)
            except ValueError:
                raise InvalidConfig(f"unknown event category {cat!r}") from None
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise InvalidConfig("seed must be a 64-bit unsigned integer")
        if self.size_scale <= 0:
            raise InvalidConfig("size_scale must be positive")

    @property
    def n_days(self):
        return (self.end - self.start).days + 1

    def to_dict(self):
        return {
            "start": self.start.isoformat(),
            "end": self.end.isoformat(),
            "sigma2": {c: float(self.sigma2[c]) for c in COMPONENTS},
            "intercept": self.intercept,
            "event_effects": dict(self.event_effects),
            "event_noise": self.event_noise,
            "weather_effects": dict(self.weather_effects),
            "stations": list(self.stations),
            "weekday_effects": list(self.weekday_effects),
            "weekday_noise_multipliers": list(self.weekday_noise_multipliers),
            "hour_noise_multipliers": list(self.hour_noise_multipliers),
            "seasonal_amplitude": self.seasonal_amplitude,
            "seasonal_peak_day": self.seasonal_peak_day,
            "intercept_sampling": self.intercept_sampling,
            "base_size": self.base_size,
            "size_scale": self.size_scale,
            "seed": self.seed,
            "n_events": len(self.events),
        }


@dataclass
class GroundTruth:
    intercepts: dict  # factor -> (labels, values)
    shares: dict
    fixed_effects: dict  # name -> coefficient in activity units
    z_scale: float  # activity units -> z units of the standardized series
    activity: np.ndarray = field(repr=False)
    config: dict = field(default_factory=dict)

    def z_coef(self, name):
        return self.fixed_effects[name] * self.z_scale

    def realized_variance(self, factor):
        return float(np.var(self.intercepts[factor][1]))

    def to_dict(self):
        return {
            "generator": {"prng": PRNG, "numpy": np.__version__, "tempobeat": __version__},
            "config": self.config,
            "shares": self.shares,
            "fixed_effects": self.fixed_effects,
            "z_scale": self.z_scale,
            "realized_variance": {f: self.realized_variance(f) for f in FACTORS},
            "intercepts": {
                f: {"labels": [str(x) for x in labels], "values": [float(v) for v in values]}
                for f, (labels, values) in self.intercepts.items()
            },
        }


def _streams(seed):
    children = np.random.SeedSequence(int(seed)).spawn(len(_STREAMS))
    return {name: np.random.Generator(np.random.PCG64(ss)) for name, ss in zip(_STREAMS, children)}


def _draw_intercepts(rng, n, sigma2, mode):
    if n == 0:
        return np.zeros(0)
    sd = float(np.sqrt(sigma2))
    if mode == "iid" or n == 1:
        return rng.normal(0.0, sd, n) if n > 1 or mode == "iid" else np.zeros(1)
    # normal quantiles in random order, rescaled to the exact population variance
    values = stats.norm.ppf((np.arange(n) + 0.5) / n)
    values = rng.permutation(values)
    values -= values.mean()
    spread = values.std()
    return values * (sd / spread) if spread > 0 else values


def synth_weather(grid, stations, rng) -> WeatherData:
    """Smooth seasonal + diurnal temperature and bursty precipitation per station."""
    t = (grid - grid[0]).astype(np.int64).astype(float)
    doy = (grid.astype("datetime64[D]") - grid.astype("datetime64[Y]").astype("datetime64[D]")).astype(float)
    hour = (grid - grid.astype("datetime64[D]").astype("datetime64[h]")).astype(float)
    series = {}
    for k, station in enumerate(stations):
        mean = 8.0 - 1.5 * k
        seasonal = -10.0 * np.cos(2 * np.pi * (doy - 15.0) / 365.25)
        diurnal = -3.0 * np.cos(2 * np.pi * (hour - 3.0) / 24.0)
        walk = np.convolve(rng.normal(0, 1.0, len(t) + 23), np.ones(24) / np.sqrt(24), mode="valid")
        temp = np.clip(np.round(mean + seasonal + diurnal + walk, 1), -60.0, 60.0)
        raining = rng.random(len(t)) < 0.08
        precip = np.where(raining, np.round(rng.exponential(0.8, len(t)), 1), 0.0)
        series[station] = WeatherSeries(station, grid.copy(), temp + 0.0, precip + 0.0)
    return WeatherData(series, [])


def random_events(start: dt.date, end: dt.date, seed=0, counts=None):
    """A reproducible event calendar: all-day holidays/disruptions, evening spans for media."""
    counts = counts or {"secular_holiday": 8, "religious_holiday": 10, "sports": 12, "tv_media": 10,
                        "weather_transport": 3}
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 7])))
    n_days = (end - start).days + 1
    out = []
    taken = set()
    for cat in EVENT_COLUMNS:
        n = int(counts.get(cat, 0))
        free = [d for d in range(n_days) if d not in taken]
        if n > len(free):
            raise InvalidConfig(f"cannot place {n} {cat} events in {len(free)} free days")
        days = sorted(rng.choice(free, size=n, replace=False).tolist())
        taken.update(days)
        for d in days:
            day = start + dt.timedelta(days=d)
            if cat in ("sports", "tv_media"):
                begin = dt.datetime(day.year, day.month, day.day, int(rng.integers(17, 21)))
                out.append(EventRow(begin, begin + dt.timedelta(hours=int(rng.integers(2, 4))),
                                    EventCategory(cat), False))
            else:
                out.append(all_day_event(day, cat))
    out.sort(key=lambda e: (e.start, EVENT_COLUMNS.index(EventCategory(e.category).value)))
    return tuple(out)


def generate_series(config: SynthConfig):
    """Generate ``(AnalysisDataset, GroundTruth)`` for a configuration."""
    config.validate()
    rng = _streams(config.seed)
    start = np.datetime64(config.start, "h")
    grid = start + np.arange(config.n_days * 24) * np.timedelta64(1, "h")
    keys = calendar_keys(grid)
    n = len(grid)

    intercepts = {}
    y = np.full(n, float(config.intercept))
    for f, labels_all in zip(FACTORS, (keys.hour, keys.date, keys.month_year)):
        labels, codes = np.unique(labels_all, return_inverse=True)
        values = _draw_intercepts(rng[f], len(labels), config.sigma2[f], config.intercept_sampling)
        intercepts[f] = (labels, values)
        y += values[codes]

    weather = synth_weather(grid, config.stations, rng["weather"])
    covariates = engineer_covariates(weather, config.events, grid)
    fixed = {"constant": float(config.intercept)}
    for name, coef in list(config.event_effects.items()) + list(config.weather_effects.items()):
        try:
            col = covariates.column(name)
        except KeyError:
            raise InvalidConfig(f"effect configured for unknown covariate {name!r}") from None
        y += coef * col
        fixed[name] = float(coef)

    y += np.asarray(config.weekday_effects, dtype=float)[keys.weekday]
    if config.seasonal_amplitude:
        doy = (keys.date - keys.date.astype("datetime64[Y]").astype("datetime64[D]")).astype(float)
        y += config.seasonal_amplitude * np.cos(2 * np.pi * (doy - config.seasonal_peak_day) / 365.25)

    noise_sd = np.sqrt(config.sigma2["residual"]) * (
        np.asarray(config.weekday_noise_multipliers, dtype=float)[keys.weekday]
        * np.asarray(config.hour_noise_multipliers, dtype=float)[keys.hour])
    if config.event_noise != 1.0:
        on_event = np.zeros(n, dtype=bool)
        for name in covariates.event_columns():
            on_event |= covariates.column(name) != 0
        noise_sd = np.where(on_event, noise_sd * config.event_noise, noise_sd)
    y += rng["residual"].normal(0.0, 1.0, n) * noise_sd

    raw = np.maximum(np.round(config.base_size + config.size_scale * y), 0.0)
    series = standardize(raw, stamps=grid)
    total = sum(config.sigma2[c] for c in COMPONENTS)
    shares = {c: (config.sigma2[c] / total if total > 0 else 0.0) for c in COMPONENTS}
    truth = GroundTruth(intercepts, shares, fixed, config.size_scale / series.sd, y, config.to_dict())
    dataset = AnalysisDataset(grid, raw, series, covariates, None, None, (), tuple(config.stations),
                              tuple(config.events))
    return dataset, truth


def generate_proxy_pair(config: SynthConfig, noise_rel: float, a=250.0, b=1.0e4,
                        count_base=1.0e6, count_scale=2.5e5):
    """Row counts from the generated activity and sizes ``(a*count + b)(1 + noise_rel*eps)``."""
    if noise_rel < 0:
        raise InvalidConfig("noise_rel must be non-negative")
    _, truth = generate_series(config)
    counts = np.maximum(np.round(count_base + count_scale * truth.activity), 0.0)
    eps = _streams(config.seed)["proxy"].normal(0.0, 1.0, len(counts))
    sizes = (a * counts + b) * (1.0 + noise_rel * eps)
    return sizes, counts


def reference_config(seed=0, start=dt.date(2018, 1, 1), end=dt.date(2019, 5, 31), **kwargs):
    """Generator configured with the empty-model variance components of the phone data."""
    kwargs.setdefault("intercept_sampling", "stratified")
    return SynthConfig(start=start, end=end, sigma2=dict(REFERENCE_SIGMA2), seed=seed, **kwargs)


# -- file output ------------------------------------------------------------

def _num(x):
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2 ** 53 else repr(x)


def observations_csv(dataset: AnalysisDataset, counts=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "size_bytes"] + (["row_count"] if counts is not None else []))
    for i, stamp in enumerate(dataset.grid):
        row = [format_stamp(stamp), _num(dataset.raw[i])]
        if counts is not None:
            row.append(_num(counts[i]))
        w.writerow(row)
    return buf.getvalue()


def weather_csv(weather: WeatherData) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "station", "air_temp_c", "precip_mm"])
    stations = list(weather.series)
    grid = weather.series[stations[0]].stamps
    for i, stamp in enumerate(grid):
        for s in stations:
            ws = weather.series[s]
            w.writerow([format_stamp(stamp), s, repr(float(ws.temp[i])), repr(float(ws.precip[i]))])
    return buf.getvalue()


def events_csv(events) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["start", "end", "category", "all_day"])
    for e in events:
        cat = EventCategory(e.category).value
        if e.all_day:
            last = (e.end - dt.timedelta(days=1)).date()
            w.writerow([e.start.date().isoformat(), last.isoformat() if last != e.start.date() else "",
                        cat, "true"])
        else:
            w.writerow([e.start.isoformat(timespec="minutes"), e.end.isoformat(timespec="minutes"),
                        cat, "false"])
    return buf.getvalue()


def write_synthetic(config: SynthConfig, directory, noise_rel=None):
    """Write observations/weather/events CSVs plus truth.json; return the paths."""
    dataset, truth = generate_series(config)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = _streams(config.seed)
    counts = None
    if noise_rel is not None:
        _, counts = generate_proxy_pair(config, 0.0)
        eps = rng["proxy"].normal(0.0, 1.0, len(counts))
        counts = np.maximum(np.round(counts * (1.0 + noise_rel * eps)), 0.0)
    # regenerate the same weather stream the dataset used
    weather = synth_weather(dataset.grid, config.stations, rng["weather"])
    files = {
        "observations.csv": observations_csv(dataset, counts),
        "weather.csv": weather_csv(weather),
        "events.csv": events_csv(config.events),
        "truth.json": json.dumps(truth.to_dict(), indent=2, sort_keys=True) + "\n",
    }
    paths = []
    for name, text in files.items():
        path = directory / name
        path.write_text(text, encoding="utf-8")
        paths.append(path)
    return paths
