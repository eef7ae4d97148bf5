from __future__ import annotations

import numpy as np
import pytest

from safecopter.barriers import SafetyConfig
from safecopter.config import load_scenario
from safecopter.dynamics import AugmentedState, VehicleParams
from safecopter.simulation import Scenario


@pytest.fixture
def scenario() -> Scenario:
    return load_scenario()


@pytest.fixture
def params(scenario: Scenario) -> VehicleParams:
    return scenario.params


@pytest.fixture
def cfg(scenario: Scenario) -> SafetyConfig:
    return scenario.cfg


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240101)


@pytest.fixture
def hover_state(params: VehicleParams, cfg: SafetyConfig) -> AugmentedState:
    return AugmentedState.hover(params, p=cfg.p_d)


@pytest.fixture
def initial_state(scenario: Scenario) -> AugmentedState:
    return scenario.initial_state


@pytest.fixture
def short_scenario(scenario: Scenario) -> Scenario:
    return scenario.replace(duration=0.05)
