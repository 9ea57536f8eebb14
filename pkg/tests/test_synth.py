import datetime as dt
import json

import numpy as np
import pytest

from tempobeat.core import proxy_r2
from tempobeat.errors import InvalidConfig
from tempobeat.ingest import assemble_dataset, parse_events, parse_observations, parse_weather
from tempobeat.synth import (
    REFERENCE_SIGMA2,
    SynthConfig,
    generate_proxy_pair,
    generate_series,
    random_events,
    reference_config,
    write_synthetic,
)

SHORT = dict(start=dt.date(2019, 1, 1), end=dt.date(2019, 1, 31))


def test_shape_and_shares():
    ds, truth = generate_series(SynthConfig(**SHORT))
    assert len(ds) == 31 * 24
    total = sum(REFERENCE_SIGMA2.values())
    assert truth.shares["hour"] == pytest.approx(REFERENCE_SIGMA2["hour"] / total)
    assert set(truth.intercepts) == {"hour", "day", "month_year"}
    assert len(truth.intercepts["hour"][0]) == 24


def test_stratified_intercepts_hit_configured_variance():
    _, truth = generate_series(reference_config(seed=3, **SHORT))
    assert truth.realized_variance("hour") == pytest.approx(REFERENCE_SIGMA2["hour"], rel=1e-12)
    assert truth.realized_variance("day") == pytest.approx(REFERENCE_SIGMA2["day"], rel=1e-12)


def test_seed_determinism_and_independence():
    a, _ = generate_series(SynthConfig(seed=5, **SHORT))
    b, _ = generate_series(SynthConfig(seed=5, **SHORT))
    c, _ = generate_series(SynthConfig(seed=6, **SHORT))
    np.testing.assert_array_equal(a.raw, b.raw)
    assert not np.array_equal(a.raw, c.raw)


def test_event_effects_injected():
    events = random_events(SHORT["start"], SHORT["end"], seed=0, counts={"religious_holiday": 3})
    base = SynthConfig(seed=1, events=tuple(events), **SHORT)
    bumped = SynthConfig(seed=1, events=tuple(events), event_effects={"religious_holiday": -1.0}, **SHORT)
    (_, t0), (_, t1) = generate_series(base), generate_series(bumped)
    diff = t1.activity - t0.activity
    assert np.sum(diff != 0) == 72
    assert np.allclose(diff[diff != 0], -1.0)
    assert t1.z_coef("religious_holiday") == pytest.approx(-1.0 * t1.z_scale)


def test_config_validation():
    with pytest.raises(InvalidConfig):
        generate_series(SynthConfig(start=dt.date(2019, 2, 1), end=dt.date(2019, 1, 1)))
    with pytest.raises(InvalidConfig):
        generate_series(SynthConfig(sigma2={"hour": 1.0}, **SHORT))
    with pytest.raises(InvalidConfig):
        generate_series(SynthConfig(event_effects={"concert": 1.0}, **SHORT))


def test_proxy_pair_noise_controls_r2():
    cfg = SynthConfig(seed=2, **SHORT)
    sizes, counts = generate_proxy_pair(cfg, 0.0)
    assert proxy_r2(sizes, counts) == pytest.approx(1.0)
    noisy = proxy_r2(*generate_proxy_pair(cfg, 0.2))
    assert noisy < proxy_r2(*generate_proxy_pair(cfg, 0.01)) < 1.0


def test_written_files_parse_back(tmp_path):
    events = random_events(SHORT["start"], SHORT["end"], seed=4,
                           counts={"secular_holiday": 1, "sports": 3, "tv_media": 2})
    cfg = SynthConfig(seed=4, events=tuple(events), **SHORT)
    write_synthetic(cfg, tmp_path, noise_rel=0.01)
    ds, truth = generate_series(cfg)
    obs = parse_observations(tmp_path / "observations.csv")
    back = assemble_dataset(obs, parse_weather(tmp_path / "weather.csv"), parse_events(tmp_path / "events.csv"))
    np.testing.assert_array_equal(back.raw, ds.raw)
    np.testing.assert_allclose(back.covariates.values, ds.covariates.values, atol=1e-9)
    assert back.row_count is not None
    meta = json.loads((tmp_path / "truth.json").read_text())
    assert meta["generator"]["prng"] == "numpy.random.PCG64"
    first = {p: p.read_bytes() for p in tmp_path.iterdir()}
    write_synthetic(cfg, tmp_path, noise_rel=0.01)
    assert {p: p.read_bytes() for p in tmp_path.iterdir()} == first
