import datetime as dt
import warnings

import numpy as np
import pytest

from conftest import random_design
from tempobeat.errors import GroupUnseen, TooLargeForOracle, UnknownColumn
from tempobeat.mlm import (
    COMPONENTS,
    ModelFit,
    ModelSpec,
    build_design,
    dense_blup,
    design_from_arrays,
    fd_gradient,
    fit_ml,
    ols_loglik,
    oracle_fit_dense,
    predict_conditional,
    profiled_deviance,
    standard_spec,
)
from tempobeat.synth import SynthConfig, generate_series, random_events, reference_config


def components_close(a, b, rel=1e-4):
    """Relative agreement; components below 1e-6 of the total count as zero on both sides."""
    tiny = 1e-6 * max(a.total, b.total)
    for c in COMPONENTS:
        x, y = a.sigma2[c], b.sigma2[c]
        if x < tiny and y < tiny:
            continue
        if abs(x - y) > rel * max(abs(x), abs(y)):
            return False
    return True


@pytest.mark.parametrize("seed", range(8))
def test_matches_dense_oracle(seed):
    d = random_design(seed)
    fit, ref = fit_ml(d), oracle_fit_dense(d)
    assert abs(fit.loglik - ref.loglik) <= 1e-6
    assert components_close(fit.components, ref.components)
    np.testing.assert_allclose(fit.coef, ref.coef, atol=1e-5)
    blup = np.concatenate([fit.blups[f][1] for f in ("hour", "day", "month_year")])
    np.testing.assert_allclose(blup, dense_blup(d, fit), atol=1e-8)


def test_oracle_size_limit():
    n = 501
    d = design_from_arrays(np.arange(n, dtype=float) % 7, np.arange(n) % 24, np.arange(n) // 24, np.arange(n) // 200)
    with pytest.raises(TooLargeForOracle):
        oracle_fit_dense(d)


@pytest.mark.parametrize("seed", range(4))
def test_gradient_vanishes_at_optimum(seed):
    d = random_design(seed + 100)
    fit = fit_ml(d)
    dev = profiled_deviance(d)
    g = fd_gradient(dev, fit.log_variances)
    free = ~np.array([fit.components.at_boundary[c] for c in COMPONENTS])
    assert np.max(np.abs(g[free]), initial=0.0) < 1e-4
    # on the floor the deviance must not fall when the component grows
    assert np.all(g[~free] >= -1e-4)


def one_way_ml(y, a, n):
    groups = y.reshape(a, n)
    means = groups.mean(axis=1)
    msb = n * np.sum((means - y.mean()) ** 2) / (a - 1)
    msw = np.sum((groups - means[:, None]) ** 2) / (a * (n - 1))
    s2a = ((1 - 1 / a) * msb - msw) / n
    if s2a <= 0:
        return 0.0, np.var(y)
    return s2a, msw


@pytest.mark.parametrize("seed,a,n", [(0, 6, 5), (1, 10, 3), (2, 4, 12), (3, 24, 8)])
def test_balanced_one_way_closed_form(seed, a, n):
    rng = np.random.default_rng(seed)
    y = np.repeat(rng.normal(0, 1.0, a), n) + rng.normal(0, 0.7, a * n) + 3.0
    groups = np.repeat(np.arange(a), n)
    d = design_from_arrays(y, groups, np.zeros(a * n), np.zeros(a * n))
    fit = fit_ml(d)
    s2a, s2e = one_way_ml(y, a, n)
    assert fit.components.sigma2["hour"] == pytest.approx(s2a, rel=1e-6, abs=1e-6)
    assert fit.components.sigma2["residual"] == pytest.approx(s2e, rel=1e-6, abs=1e-6)
    assert fit.components.sigma2["day"] < 1e-6 * s2e


def test_one_way_null_group_effect_on_boundary():
    rng = np.random.default_rng(9)
    y = np.repeat(np.array([0.0, 0.0, 0.0, 0.0]), 10) + rng.normal(0, 1, 40)
    # force the between-group mean square well below the within one
    y = y - np.repeat(y.reshape(4, 10).mean(axis=1), 10)
    d = design_from_arrays(y, np.repeat(np.arange(4), 10), np.zeros(40), np.zeros(40))
    fit = fit_ml(d)
    assert fit.components.at_boundary["hour"]
    assert fit.components.sigma2["residual"] == pytest.approx(np.var(y), rel=1e-6)


def test_permutation_invariance():
    d = random_design(42)
    perm = np.random.default_rng(0).permutation(d.n)
    labels = {f: d.labels[f][d.codes[f]] for f in ("hour", "day", "month_year")}
    p = design_from_arrays(d.y[perm], labels["hour"][perm], labels["day"][perm], labels["month_year"][perm],
                           X=d.X[perm], names=d.names)
    a, b = fit_ml(d), fit_ml(p)
    assert a.loglik == pytest.approx(b.loglik, abs=1e-8)
    assert components_close(a.components, b.components, rel=1e-5)


def test_lr_statistic_and_ols():
    d = random_design(5)
    fit = fit_ml(d)
    assert fit.lr_chi2_vs_linear == pytest.approx(2 * (fit.loglik - ols_loglik(d.X, d.y)))
    assert fit.lr_chi2_vs_linear >= 0


def test_residual_only_data_puts_groups_near_zero():
    rng = np.random.default_rng(11)
    n_days = 60
    day = np.repeat(np.arange(n_days), 24)
    hour = np.tile(np.arange(24), n_days)
    y = rng.normal(0, 1, day.size)
    fit = fit_ml(design_from_arrays(y, hour, day, day // 30))
    resid = fit.components.sigma2["residual"]
    for f in ("hour", "day", "month_year"):
        assert fit.components.at_boundary[f] or fit.components.sigma2[f] < 0.01 * resid


def test_wald_ci_and_json_roundtrip():
    d = random_design(7)
    fit = fit_ml(d)
    b = fit.beta[1]
    assert b.ci95[0] < b.coef < b.ci95[1]
    assert b.ci95[1] - b.coef == pytest.approx(1.959963984540054 * b.se)
    back = ModelFit.from_dict(fit.to_dict())
    assert back.loglik == fit.loglik
    np.testing.assert_array_equal(back.coef, fit.coef)
    np.testing.assert_array_equal(predict_conditional(back, d), predict_conditional(fit, d))


def test_predict_rejects_unseen_groups():
    d = random_design(3)
    fit = fit_ml(d)
    hours = d.labels["hour"][d.codes["hour"]].copy()
    hours[0] = 999
    other = design_from_arrays(d.y, hours, d.labels["day"][d.codes["day"]],
                               d.labels["month_year"][d.codes["month_year"]], X=d.X, names=d.names)
    with pytest.raises(GroupUnseen):
        predict_conditional(fit, other)


def test_build_design_specs():
    start, end = dt.date(2019, 1, 1), dt.date(2019, 2, 28)
    events = random_events(start, end, seed=1, counts={"sports": 3, "religious_holiday": 2})
    cfg = SynthConfig(start=start, end=end, events=tuple(events))
    ds, _ = generate_series(cfg)
    empty = build_design(ds, standard_spec("empty", ds))
    assert empty.names == ("constant",) and empty.n == len(ds)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        full = build_design(ds, standard_spec("full", ds))
    assert "tv_media" not in full.names  # constant column left out
    assert any("tv_media" in str(w.message) for w in caught)
    restricted = build_design(ds, standard_spec("restricted", ds))
    assert restricted.n == len(ds) - 24 * 5
    with pytest.raises(UnknownColumn):
        build_design(ds, ModelSpec("x", ("no_such_column",)))


@pytest.mark.slow
def test_reference_scale_fit_converges():
    ds, truth = generate_series(reference_config(seed=4))
    fit = fit_ml(build_design(ds, standard_spec("empty", ds)))
    assert fit.converged
    for c in COMPONENTS:
        assert abs(fit.components.shares[c] - truth.shares[c]) < 0.02
