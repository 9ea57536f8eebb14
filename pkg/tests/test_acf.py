import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tempobeat.acf import PRESETS, acf_at_lag, aggregate_daily, correlogram, preset_correlogram
from tempobeat.errors import DegenerateSeries, InsufficientDays, LagOutOfRange


def literal_acf(z, h):
    """Loop transcription: sum over t < N-h of deviation products, over the full-N sum of squares."""
    n = len(z)
    zbar = sum(z) / n
    num = 0.0
    for t in range(n - h):
        num += (z[t] - zbar) * (z[t + h] - zbar)
    den = 0.0
    for t in range(n):
        den += (z[t] - zbar) ** 2
    return num / den


def test_matches_literal_formula():
    rng = np.random.default_rng(3)
    z = rng.normal(size=57)
    for h in (0, 1, 5, 30, 56):
        assert acf_at_lag(z, h) == pytest.approx(literal_acf(list(z), h), abs=1e-12)


def test_lag_zero_exactly_one_and_errors():
    assert acf_at_lag(np.array([1.0, 4.0, 2.0]), 0) == 1.0
    with pytest.raises(LagOutOfRange):
        acf_at_lag(np.arange(5.0), 5)
    with pytest.raises(LagOutOfRange):
        acf_at_lag(np.arange(5.0), -1)
    with pytest.raises(DegenerateSeries):
        acf_at_lag(np.ones(5), 1)


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=50).filter(lambda v: np.ptp(v) > 1e-2),
       st.floats(0.01, 100), st.floats(-1e3, 1e3))
@settings(max_examples=60, deadline=None)
def test_bounded_and_affine_invariant(values, a, b):
    z = np.array(values)
    for h in range(1, len(z)):
        r = acf_at_lag(z, h)
        assert abs(r) <= 1 + 1e-12
        assert acf_at_lag(a * z + b, h) == pytest.approx(r, abs=1e-8)


def test_correlogram_lags():
    z = np.sin(np.arange(200) * 2 * np.pi / 24)
    c = correlogram(z, "hour", 24, 96)
    assert c.lags.tolist() == [24, 48, 72, 96]
    assert np.all(c.r > 0.5)
    assert correlogram(z, "hour", 1, 12).r[-1] < -0.9


def test_presets():
    assert {(p.lag_unit, p.lag_step, p.max_lag) for p in PRESETS.values()} == {
        ("hour", 1, 24), ("hour", 24, 480), ("day", 1, 30), ("day", 7, 210)}
    rng = np.random.default_rng(0)
    c = preset_correlogram("day_step7", rng.normal(size=500), rng.normal(size=300))
    assert c.lags[-1] == 210 and c.lag_step == 7


def test_daily_aggregation_drops_partial_days():
    stamps = np.datetime64("2019-05-13T05", "h") + np.arange(24 * 4)
    values = np.arange(stamps.size, dtype=float)
    daily = aggregate_daily(stamps, values)
    assert len(daily.dates) == 3
    assert daily.trimmed
    first = values[19:43].sum()
    assert daily.totals[0] == first
    assert daily.z.mean() == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(InsufficientDays):
        aggregate_daily(stamps[:30], values[:30])
