import numpy as np
import pytest

from tempobeat.mlm import design_from_arrays


def random_design(seed, n_max=200, with_covariate=True):
    """Small crossed layout: hour labels crossed with days nested in months."""
    rng = np.random.default_rng(seed)
    n_hours = int(rng.integers(2, 7))
    n_months = int(rng.integers(2, 5))
    days_per_month = int(rng.integers(2, 5))
    n_days = n_months * days_per_month
    per_day = max(1, min(n_hours, n_max // n_days))
    day = np.repeat(np.arange(n_days), per_day)
    hour = np.tile(np.arange(per_day), n_days) % n_hours
    keep = rng.random(day.size) > 0.1
    keep[:2] = True
    day, hour = day[keep], hour[keep]
    month = day // days_per_month
    n = day.size
    sd = np.sqrt(rng.uniform(0.05, 2.0, 4))
    y = (rng.normal(0, sd[0], n_hours)[hour] + rng.normal(0, sd[1], n_days)[day]
         + rng.normal(0, sd[2], n_months)[month] + rng.normal(0, sd[3], n))
    X = None
    if with_covariate:
        x = rng.normal(size=n)
        y = y + 0.5 * x + 1.0
        X = np.column_stack([np.ones(n), x])
    return design_from_arrays(y, hour, day, month, X=X)


@pytest.fixture
def design_factory():
    return random_design


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
