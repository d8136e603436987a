import numpy as np
import pytest
from hypothesis import settings

from pcflab.torus import GridSpec, PotentialForm, SpectralOps

settings.register_profile("pcflab", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("pcflab")


@pytest.fixture(scope="session")
def grid8():
    return GridSpec(2, 8)


@pytest.fixture(scope="session")
def ops8(grid8):
    return SpectralOps(grid8)


@pytest.fixture(scope="session")
def grid1():
    """Complex dimension one, used where cheap fields suffice."""
    return GridSpec(1, 16)


@pytest.fixture(scope="session")
def ops1(grid1):
    return SpectralOps(grid1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def standard_alpha(grid, eps=0.05):
    return PotentialForm.from_modes(grid, [(0, eps, [0, 1], [0, 0])])
