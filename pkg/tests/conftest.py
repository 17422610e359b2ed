import os
from datetime import date, timedelta

import numpy as np
import pytest

from domain.entities import DesignConfig, GeoPanel, SynthConfig
from infrastructure.synthetic import generate_panel


def make_panel(responses, start=date(2023, 1, 2), spend=None, geos=None):
    """Panel from an (n_geos, n_days) array; geos default to g0, g1, ..."""
    responses = np.asarray(responses, dtype=float)
    n_geos, n_days = responses.shape
    geos = geos or [f"g{i}" for i in range(n_geos)]
    dates = [start + timedelta(days=d) for d in range(n_days)]
    return GeoPanel(geos=geos, dates=dates, response=responses, spend=spend)


def pytest_collection_modifyitems(config, items):
    if os.environ.get("TMD_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set TMD_RUN_SLOW=1 to run simulation-study reproductions")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# =============================================================================
# Fixtures
# =============================================================================


@pytest.fixture
def constant_panel():
    """Four geos with constant daily response 10, 20, 30, 45 over 35 days, spend 1% of response"""
    levels = np.array([10.0, 20.0, 30.0, 45.0])
    response = np.repeat(levels[:, None], 35, axis=1)
    return make_panel(response, spend=response * 0.01, geos=["a", "b", "c", "d"])


@pytest.fixture
def small_synth_config():
    return SynthConfig(n_geos=12, n_days=35, seed=11)


@pytest.fixture
def small_synth_panel(small_synth_config):
    return generate_panel(small_synth_config)


@pytest.fixture
def small_design_config():
    return DesignConfig(budget=1e4, n_grid=[4, 5, 6], replicates=30, seed=5)


@pytest.fixture
def worked_example():
    """Four pairs where one heavy outlier dominates the untrimmed ratio"""
    return {"x": [2.0, 3.0, 5.0, 2.0], "y": [10.0, 20.0, 30.0, 1000.0]}
