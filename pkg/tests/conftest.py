import pytest

from pumpsched.config import load_config
from pumpsched.dataset import DemandProfileConfig, synthesize_demand


@pytest.fixture(scope="session")
def config():
    return load_config()


@pytest.fixture(scope="session")
def day_demand():
    return synthesize_demand(1, seed=7)


@pytest.fixture(scope="session")
def quiet_profile():
    """Deterministic profile: no noise, no seasonal modulation."""
    return DemandProfileConfig(noise_amplitude=0.0, seasonal_amplitude=0.0)
