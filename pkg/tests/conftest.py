import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sphtransport.geometry import generate_phyllotaxis

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def ps400():
    return generate_phyllotaxis(400)


@pytest.fixture(scope="session")
def ps1600():
    return generate_phyllotaxis(1600)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_unit(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1)[:, None]
