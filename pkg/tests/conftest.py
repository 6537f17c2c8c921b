import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pgd_strip.model import plane_strain_moduli

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def mat():
    return plane_strain_moduli(1.0, 0.3)


@pytest.fixture(scope="session")
def mat0():
    return plane_strain_moduli(1.0, 0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
