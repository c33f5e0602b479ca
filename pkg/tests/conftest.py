import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from disphyp.example_systems import get_family

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

GOLDENS = Path(__file__).parent / "goldens"


def golden(name):
    return json.loads((GOLDENS / f"{name}.json").read_text())


@pytest.fixture(scope="session")
def wave():
    return get_family("wave_slow_osc")


@pytest.fixture(scope="session")
def const():
    return get_family("wave_constant")


@pytest.fixture(scope="session")
def wave_h(wave):
    from disphyp.diagonalizer import build_hierarchy
    return build_hierarchy(wave, k=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
