import numpy as np
import pytest

from debyempi import FOV, PhysicalParams, ScalarGrid


@pytest.fixture
def params():
    return PhysicalParams()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_fov():
    # a few resolution lengths across, so kernels are far from trivial
    return FOV.symmetric(6e-3, 5e-3)


def random_grid(rng, shape, fov):
    return ScalarGrid(rng.standard_normal(shape), fov)
