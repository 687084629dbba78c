import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mlattack.model import LinearModel

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


def random_linear_instance(rng, d, m, scale=1.0):
    W = rng.standard_normal((d, m))
    x = rng.standard_normal(d)
    x *= scale / np.linalg.norm(x)
    y = np.where(x @ W > 0, 1, -1)
    return LinearModel(W), x, y


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
