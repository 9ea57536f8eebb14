"""Model specifications and design bundles for the three-factor mixed model.

Random intercepts: hour of day (crossed with days), calendar date, and
month-year (dates nest in month-years).  Residual is per observation.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..core import CalendarKeys, calendar_keys
from ..errors import EmptyAfterRestriction, LengthMismatch, UnknownColumn

FACTORS = ("hour", "day", "month_year")
COMPONENTS = FACTORS + ("residual",)
RESTRICTIONS = ("none", "exclude_event_days")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    fixed_effects: tuple = ()
    restriction: str = "none"

    def __post_init__(self):
        if self.restriction not in RESTRICTIONS:
            raise ValueError(f"unknown restriction {self.restriction!r}")
        object.__setattr__(self, "fixed_effects", tuple(self.fixed_effects))


def empty_spec():
    return ModelSpec("empty")


def full_spec(covariates):
    names = covariates.names if hasattr(covariates, "names") else tuple(covariates)
    return ModelSpec("full", tuple(names))


def restricted_spec():
    return ModelSpec("restricted", (), "exclude_event_days")


def standard_spec(name, dataset):
    if name == "empty":
        return empty_spec()
    if name == "full":
        return full_spec(dataset.covariates)
    if name == "restricted":
        return restricted_spec()
    raise ValueError(f"unknown model {name!r}")


@dataclass(frozen=True)
class Design:
    spec: ModelSpec
    y: np.ndarray
    X: np.ndarray
    names: tuple
    codes: dict  # factor -> int array, one group id per row
    labels: dict  # factor -> array of group labels indexed by code
    rows: np.ndarray | None = None  # positions in the source dataset
    keys: CalendarKeys | None = None
    stamps: np.ndarray | None = None
    dropped: tuple = field(default=())

    @property
    def n(self):
        return len(self.y)

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def group_sizes(self):
        return tuple(len(self.labels[f]) for f in FACTORS)

    @property
    def q(self):
        return sum(self.group_sizes)

    def offsets(self):
        sizes = self.group_sizes
        starts = np.concatenate([[0], np.cumsum(sizes)])
        return {f: slice(int(starts[i]), int(starts[i + 1])) for i, f in enumerate(FACTORS)}

    def Z(self):
        """Sparse indicator matrix, columns stacked hour | day | month_year."""
        cols = []
        off = 0
        for f, size in zip(FACTORS, self.group_sizes):
            cols.append(self.codes[f] + off)
            off += size
        rows = np.repeat(np.arange(self.n), len(FACTORS))
        cols = np.column_stack(cols).reshape(-1)
        data = np.ones(len(rows))
        return sp.csc_matrix((data, (rows, cols)), shape=(self.n, off))

    def Z_dense(self):
        return self.Z().toarray()


def _factorize(values):
    labels, codes = np.unique(values, return_inverse=True)
    return codes.astype(np.int64), labels


def design_from_arrays(y, hour, day, month_year, X=None, names=None, spec=None, **extra) -> Design:
    """Design bundle from raw group-label arrays (labels need not be calendar values)."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    if X is None:
        X = np.ones((n, 1))
        names = ("constant",)
    X = np.asarray(X, dtype=float)
    if names is None:
        names = ("constant",) + tuple(f"x{i}" for i in range(1, X.shape[1]))
    codes, labels = {}, {}
    for f, values in zip(FACTORS, (hour, day, month_year)):
        values = np.asarray(values)
        if len(values) != n:
            raise LengthMismatch(f"{f} grouping has {len(values)} entries for {n} rows")
        codes[f], labels[f] = _factorize(values)
    if X.shape[0] != n:
        raise LengthMismatch("fixed-effects matrix row count differs from y")
    return Design(spec or ModelSpec("custom", tuple(names[1:])), y, X, tuple(names), codes, labels,
                  **extra)


def event_day_mask(dataset):
    """Rows lying on a calendar date where any event dummy is 1."""
    cov = dataset.covariates
    events = cov.event_columns()
    if not events:
        return np.zeros(len(dataset), dtype=bool)
    any_event = np.zeros(len(dataset), dtype=bool)
    for name in events:
        any_event |= cov.column(name) != 0
    days = dataset.grid.astype("datetime64[D]")
    return np.isin(days, np.unique(days[any_event]))


def build_design(dataset, spec: ModelSpec) -> Design:
    names = dataset.covariates.names
    for col in spec.fixed_effects:
        if col not in names:
            raise UnknownColumn(f"fixed effect {col!r} not among covariates ({', '.join(names)})")
    keep = np.ones(len(dataset), dtype=bool)
    if dataset.excluded is not None:
        keep &= ~dataset.excluded
    if spec.restriction == "exclude_event_days":
        keep &= ~event_day_mask(dataset)
    rows = np.flatnonzero(keep)
    if len(rows) == 0:
        raise EmptyAfterRestriction(f"model {spec.name!r}: no rows left after restriction")

    cols = []
    used = []
    dropped = []
    for name in spec.fixed_effects:
        col = dataset.covariates.column(name)[rows]
        if np.ptp(col) == 0:
            dropped.append(name)
            continue
        cols.append(col)
        used.append(name)
    if dropped:
        warnings.warn(f"model {spec.name!r}: dropping constant columns {', '.join(dropped)}",
                      stacklevel=2)
    X = np.column_stack([np.ones(len(rows))] + cols)
    keys = calendar_keys(dataset.grid[rows])
    return design_from_arrays(
        dataset.y.z[rows], keys.hour, keys.date, keys.month_year, X=X,
        names=("constant", *used), spec=spec, rows=rows, keys=keys,
        stamps=dataset.grid[rows], dropped=tuple(dropped),
    )
