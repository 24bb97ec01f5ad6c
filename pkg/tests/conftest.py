import numpy as np
import pytest

from exchange_lab.configspace import ConfigGrid


@pytest.fixture
def line_grid():
    return ConfigGrid(2, 1, -8.0, 8.0, 64)


@pytest.fixture
def plane_grid():
    return ConfigGrid(2, 2, -4.0, 4.0, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
