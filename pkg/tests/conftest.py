import numpy as np
import pytest

from cyber0.model import Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_batch(rng):
    X = rng.standard_normal((10, 6))
    y = np.arange(10) % 4
    return Dataset(X, y, 4)
