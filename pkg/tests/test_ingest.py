import datetime as dt
import io

import numpy as np
import pytest

from tempobeat.errors import (
    CoverageGap,
    DuplicateStamp,
    GapTooLarge,
    InvertedSpan,
    NonHourStamp,
    ObservationGap,
    ParseError,
    UnknownCategory,
    UnknownStation,
)
from tempobeat.ingest import (
    IngestConfig,
    all_day_event,
    assemble_dataset,
    event_dummies,
    load_config,
    parse_events,
    parse_observations,
    parse_weather,
    read_bundle,
    weather_columns,
    write_bundle,
)


def csv_text(*lines):
    return io.StringIO("\n".join(lines) + "\n")


def obs_csv(n, start="2019-05-13T00:00", skip=()):
    t0 = dt.datetime.fromisoformat(start)
    lines = ["timestamp,size_bytes"]
    for i in range(n):
        if i not in skip:
            lines.append(f"{(t0 + dt.timedelta(hours=i)).isoformat(timespec='minutes')},{1000 + (i * 37) % 101}")
    return csv_text(*lines)


def weather_text(n, start="2019-05-13T00:00", blank=(), stations=("malmo", "stockholm")):
    t0 = dt.datetime.fromisoformat(start)
    lines = ["timestamp,station,air_temp_c,precip_mm"]
    for i in range(n):
        for s in stations:
            temp = "" if (s, i) in blank else f"{10 + i * 0.5:.1f}"
            lines.append(f"{(t0 + dt.timedelta(hours=i)).isoformat(timespec='minutes')},{s},{temp},0.0")
    return csv_text(*lines)


def test_observations_sorted_and_validated():
    obs = parse_observations(csv_text("timestamp,size_bytes", "2019-01-01T01:00,5", "2019-01-01T00:00,4"))
    assert [o.value for o in obs] == [4.0, 5.0]
    with pytest.raises(DuplicateStamp) as err:
        parse_observations(csv_text("timestamp,size_bytes", "2019-01-01T00:00,4", "2019-01-01T00:00,5"))
    assert err.value.line == 3
    with pytest.raises(NonHourStamp):
        parse_observations(csv_text("timestamp,size_bytes", "2019-01-01T00:30,4"))
    with pytest.raises(ParseError):
        parse_observations(csv_text("timestamp,size_bytes", "2019-01-01T00:00,-1"))
    with pytest.raises(ParseError):
        parse_observations(csv_text("time,size", "2019-01-01T00:00,1"))


def test_timezone_aware_stamps_converted():
    obs = parse_observations(csv_text("timestamp,size_bytes", "2019-05-16T09:00+00:00,1"), tz="Europe/Stockholm")
    assert obs[0].stamp == dt.datetime(2019, 5, 16, 11)


def test_weather_interpolates_short_gaps_and_reports_them():
    w = parse_weather(weather_text(10, blank={("malmo", 3), ("malmo", 4)}))
    assert w.series["malmo"].temp[3] == pytest.approx(11.5)
    assert w.series["malmo"].temp[4] == pytest.approx(12.0)
    assert [(f.station, f.stamp.hour, f.columns) for f in w.fills] == [
        ("malmo", 3, ("air_temp_c",)), ("malmo", 4, ("air_temp_c",))]


def test_weather_gap_limits():
    with pytest.raises(GapTooLarge):
        parse_weather(weather_text(10, blank={("malmo", i) for i in range(2, 6)}))
    with pytest.raises(GapTooLarge):
        parse_weather(weather_text(10, blank={("malmo", 0)}))
    with pytest.raises(UnknownStation):
        parse_weather(weather_text(5, stations=("malmo", "lund")))
    with pytest.raises(UnknownStation):
        parse_weather(weather_text(5, stations=("malmo",)))


def test_events_all_day_inclusive_and_spans_half_open():
    ev = parse_events(csv_text("start,end,category,all_day",
                               "2019-05-16,2019-05-17,religious_holiday,true",
                               "2019-05-18T19:00,2019-05-18T21:00,sports,false"))
    assert ev[0].hours == 48
    assert ev[1].hours == 2
    with pytest.raises(InvertedSpan):
        parse_events(csv_text("start,end,category,all_day", "2019-05-18T19:00,2019-05-18T19:00,sports,false"))
    with pytest.raises(UnknownCategory):
        parse_events(csv_text("start,end,category,all_day", "2019-05-18,,concert,true"))


def test_event_dummies_cover_exact_hours():
    grid = np.datetime64("2019-05-16T00", "h") + np.arange(72)
    ev = [all_day_event(dt.date(2019, 5, 17), "secular_holiday")]
    d = event_dummies(ev, grid)
    col = d[:, 0]
    assert col.sum() == 24 and col[24] == 1 and col[23] == 0 and col[48] == 0


def test_assemble_covariates():
    obs = parse_observations(obs_csv(48))
    weather = parse_weather(weather_text(48))
    events = parse_events(csv_text("start,end,category,all_day", "2019-05-14,,sports,true"))
    ds = assemble_dataset(obs, weather, events)
    names = ds.covariates.names
    assert list(names[:5]) == ["secular_holiday", "religious_holiday", "sports", "tv_media", "weather_transport"]
    assert set(weather_columns(("malmo", "stockholm"))) <= set(names)
    assert ds.covariates.column("dtemp_malmo")[0] == 0.0
    assert ds.covariates.column("dtemp_malmo")[5] == pytest.approx(0.5)
    assert ds.covariates.column("temp_sq_malmo")[2] == pytest.approx(11.0 ** 2)
    assert ds.covariates.column("sports")[24:48].tolist() == [1.0] * 24
    with pytest.raises(CoverageGap):
        assemble_dataset(obs, parse_weather(weather_text(30)), events)


def test_observation_gap_policies():
    obs = parse_observations(obs_csv(10, skip={4}))
    with pytest.raises(ObservationGap) as err:
        assemble_dataset(obs, config=IngestConfig(obs_gap_policy="error"))
    assert "2019-05-13T04:00" in str(err.value)
    zero = assemble_dataset(obs, config=IngestConfig(obs_gap_policy="zero"))
    assert zero.raw[4] == 0.0 and len(zero) == 10
    interp = assemble_dataset(obs, config=IngestConfig(obs_gap_policy="interpolate"))
    assert interp.raw[4] == pytest.approx((interp.raw[3] + interp.raw[5]) / 2)


def test_bundle_roundtrip(tmp_path):
    obs = parse_observations(obs_csv(48))
    ds = assemble_dataset(obs, parse_weather(weather_text(48)), [], IngestConfig(drop_anomalies=True))
    paths = write_bundle(ds, tmp_path / "b")
    back = read_bundle(tmp_path / "b")
    np.testing.assert_array_equal(back.grid, ds.grid)
    np.testing.assert_array_equal(back.raw, ds.raw)
    np.testing.assert_array_equal(back.z, ds.z)
    np.testing.assert_array_equal(back.covariates.values, ds.covariates.values)
    assert back.y.mean == ds.y.mean and back.y.sd == ds.y.sd
    first = [p.read_bytes() for p in paths]
    assert [p.read_bytes() for p in write_bundle(back, tmp_path / "c")] == first


def test_load_config(tmp_path):
    p = tmp_path / "tb.ini"
    p.write_text("[tempobeat]\ntimezone = Europe/Stockholm\nanomaly_k = 3\nstations = malmo\n")
    cfg = load_config(p, anomaly_k=2.5, seed=None)
    assert cfg.timezone == "Europe/Stockholm"
    assert cfg.anomaly_k == 2.5
    assert cfg.stations == ("malmo",)
