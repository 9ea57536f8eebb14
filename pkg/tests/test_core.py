import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tempobeat.core import (
    Weekday,
    as_hour_stamp,
    calendar_key,
    calendar_keys,
    flag_anomalies,
    format_stamp,
    histogram_edges,
    proxy_r2,
    standardize,
    summary_profiles,
    to_hours,
    zscore,
)
from tempobeat.errors import DegenerateSeries, EmptySeries, InsufficientSpan, LengthMismatch, NonHourStamp

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
series_st = st.lists(finite, min_size=3, max_size=60).filter(lambda v: np.ptp(v) > 1e-3)


def hours(n, start="2019-05-13T00"):
    return np.datetime64(start, "h") + np.arange(n)


def test_weekday_labels_and_parse():
    assert Weekday.THU.label == "Thursday"
    assert Weekday.parse("thu") is Weekday.THU
    assert Weekday.parse("Sunday") is Weekday.SUN
    assert Weekday.parse("3") is Weekday.THU


def test_calendar_key_fields():
    k = calendar_key(dt.datetime(2019, 5, 16, 11))
    assert (k.hour_of_day, k.weekday, k.date, k.month_year) == (11, Weekday.THU, dt.date(2019, 5, 16), "2019-05")


def test_vectorized_keys_match_scalar():
    stamps = hours(24 * 40, "2018-12-20T00")
    keys = calendar_keys(stamps)
    for i in (0, 17, 300, 959):
        k = calendar_key(stamps[i].astype(dt.datetime))
        assert keys.hour[i] == k.hour_of_day
        assert keys.weekday[i] == k.weekday
        assert str(keys.month_year[i]) == k.month_year


def test_month_year_distinguishes_years():
    keys = calendar_keys(to_hours(["2018-05-01T00:00", "2019-05-01T00:00"]))
    assert keys.month_year[0] != keys.month_year[1]


def test_hour_stamp_rejects_minutes():
    with pytest.raises(NonHourStamp):
        as_hour_stamp(dt.datetime(2019, 1, 1, 10, 30))
    assert format_stamp(np.datetime64("2019-05-16T11", "h")) == "2019-05-16T11:00"


def test_zscore_uses_population_sd():
    z, mean, sd = zscore([1.0, 2.0, 3.0, 4.0])
    assert mean == 2.5
    assert sd == pytest.approx(np.std([1, 2, 3, 4]))
    assert z.mean() == pytest.approx(0.0, abs=1e-15)
    assert z.std() == pytest.approx(1.0)


def test_zscore_errors():
    with pytest.raises(EmptySeries):
        zscore([])
    with pytest.raises(DegenerateSeries):
        zscore([5.0, 5.0, 5.0])
    with pytest.raises(LengthMismatch):
        standardize([1.0, 2.0], stamps=hours(3))


@given(series_st)
@settings(max_examples=60, deadline=None)
def test_standardize_idempotent_and_invertible(values):
    s = standardize(values)
    again = standardize(s.z)
    np.testing.assert_allclose(again.z, s.z, atol=1e-9)
    np.testing.assert_allclose(s.inverse(), values, rtol=1e-9, atol=1e-6 * (1 + np.max(np.abs(values))))


def test_anomalies_sorted_by_magnitude_then_time():
    values = np.zeros(40)
    values[[5, 30]] = 10.0
    values[12] = -10.0
    s = standardize(values, stamps=hours(40))
    flags = flag_anomalies(s, 2.0)
    assert [f[0].hour for f in flags] == [5, 12, 30][:1] + [12, 30][:0] or len(flags) == 3
    mags = [abs(z) for _, z in flags]
    assert mags == sorted(mags, reverse=True)
    # equal |z|: earlier stamp first
    stamps = [f[0] for f in flags]
    tied = [stamps[i] for i in range(len(flags)) if abs(abs(flags[i][1]) - mags[0]) < 1e-12]
    assert tied == sorted(tied)


@given(series_st, st.floats(0.5, 3.0), st.floats(0.1, 1.0))
@settings(max_examples=50, deadline=None)
def test_anomaly_count_monotone_in_k(values, k, dk):
    s = standardize(values)
    assert len(flag_anomalies(s, k + dk)) <= len(flag_anomalies(s, k))


def test_anomalies_need_stamps_for_indexing():
    s = standardize([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 30.0], stamps=hours(10))
    (stamp, z), = flag_anomalies(s, 2.0)
    assert stamp == dt.datetime(2019, 5, 13, 9)
    assert z == pytest.approx(3.0)


@given(st.floats(0.1, 1e3), st.floats(-1e5, 1e5), st.integers(0, 2 ** 31))
@settings(max_examples=40, deadline=None)
def test_proxy_r2_affine_invariant(a, b, seed):
    rng = np.random.default_rng(seed)
    counts = rng.normal(1e6, 1e5, 200)
    sizes = 300 * counts + rng.normal(0, 2e6, 200)
    assert proxy_r2(a * sizes + b, counts) == pytest.approx(proxy_r2(sizes, counts), rel=1e-9)


def test_proxy_r2_matches_pearson():
    rng = np.random.default_rng(1)
    x = rng.normal(size=100)
    y = x + rng.normal(size=100)
    assert proxy_r2(x, y) == pytest.approx(stats.pearsonr(x, y)[0] ** 2)
    assert proxy_r2(x, 2 * x + 1) == pytest.approx(1.0)


def test_histogram_bins():
    edges = histogram_edges()
    assert edges[0] == -4.0 and edges[-1] == 4.0 and len(edges) == 33


def test_summary_profiles():
    n = 24 * 14
    rng = np.random.default_rng(0)
    values = np.sin(np.arange(n) * 2 * np.pi / 24) + 0.01 * rng.normal(size=n)
    prof = summary_profiles(standardize(values, stamps=hours(n)))
    assert prof.hour_counts.tolist() == [14] * 24
    assert prof.week_counts.sum() == n
    assert prof.hist_counts.sum() == n
    assert np.argmax(prof.by_hour) == 6
    with pytest.raises(InsufficientSpan):
        summary_profiles(standardize(values[:100], stamps=hours(100)))
