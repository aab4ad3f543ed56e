import logging

import numpy as np
import pytest
from rest_framework.test import APIClient

from pinchnet.channel import draw_realization
from pinchnet.checks import selftest_model
from pinchnet.network import init_params
from pinchnet.scenario import ScenarioConfig, build_scenario


@pytest.fixture(autouse=True)
def propagate_app_logs(monkeypatch):
    """Route app records to the root logger so caplog sees them."""
    monkeypatch.setattr(logging.getLogger("pinchnet"), "propagate", True)


@pytest.fixture
def api_client():
    return APIClient()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Two BSs, one RIS, two UEs, two waveguides with two PAs, four RIS elements."""
    return ScenarioConfig(B=2, R=1, K=2, N=2, M=2, L=4)


@pytest.fixture
def tiny_scenario(tiny_config):
    return build_scenario(tiny_config)


@pytest.fixture
def tiny_realization(tiny_scenario, rng):
    return draw_realization(tiny_scenario, rng, T=4)


@pytest.fixture
def tiny_model_config(tiny_config):
    return selftest_model(tiny_config)


@pytest.fixture
def tiny_params(tiny_model_config):
    return init_params(tiny_model_config, np.random.default_rng(0))
