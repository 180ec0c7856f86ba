import numpy as np
import pytest

from oovtrack import reference_scene


@pytest.fixture
def scene():
    return reference_scene()


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
