import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dtsync.model import generate_channels, make_config

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def defaults():
    return make_config()


@pytest.fixture
def small():
    """Four devices, six slots, two blocks: quick but nontrivial."""
    return make_config(K=4, N=6, K0=2, tau=2, beta=0.5)


@pytest.fixture
def small_channels(small):
    return generate_channels(small, 7)


def rng(*key):
    return np.random.default_rng(list(key))
