import datetime as dt
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hierfolio.market_data import PriceMatrix

settings.register_profile("ci", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "ci"))


def iso_dates(n, start=dt.date(2020, 1, 1)):
    return [(start + dt.timedelta(days=i)).isoformat() for i in range(n)]


def random_prices(m, n, seed=0, drift=0.0, vol=0.01, start=50.0):
    """Geometric random walk in base 2, returned as a PriceMatrix with ISO dates."""
    rng = np.random.default_rng(seed)
    r = rng.normal(drift, vol, size=(m, n - 1))
    p = start * np.exp2(np.concatenate([np.zeros((m, 1)), np.cumsum(r, axis=1)], axis=1))
    return PriceMatrix(tuple(f"A{i}" for i in range(m)), p, iso_dates(n))


@pytest.fixture
def prices_factory():
    return random_prices


@pytest.fixture(params=["numba", "numpy"])
def kernel_path(request, monkeypatch):
    """Run a test once on the compiled kernels and once on the numpy fallbacks."""
    if request.param == "numpy":
        monkeypatch.setenv("HIERFOLIO_DISABLE_NUMBA", "1")
    else:
        monkeypatch.delenv("HIERFOLIO_DISABLE_NUMBA", raising=False)
    return request.param
