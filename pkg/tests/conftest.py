import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("farfield", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("farfield")


def random_stft(rng, shape, scale=1.0):
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
