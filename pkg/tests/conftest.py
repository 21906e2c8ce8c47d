import numpy as np
import pytest

from app.services.scene import default_scene


@pytest.fixture
def scene():
    return default_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
