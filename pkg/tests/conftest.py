import numpy as np
import pytest

from rsma_istn.channel import realize
from rsma_istn.scenario import ScenarioConfig


@pytest.fixture(scope="session")
def cfg():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def channel(cfg):
    return realize(cfg, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
