import hypothesis
import numpy as np
import pytest

from quasidiag import initial_mesh

hypothesis.settings.register_profile(
    "default", deadline=None, max_examples=50, derandomize=True
)
hypothesis.settings.register_profile(
    "thorough", deadline=None, max_examples=300, derandomize=True
)
hypothesis.settings.load_profile("default")

np.seterr(divide="raise", over="raise", invalid="raise")


@pytest.fixture(scope="session")
def lshape2d():
    return initial_mesh(2)


@pytest.fixture(scope="session")
def lprism3d():
    return initial_mesh(3)


@pytest.fixture(scope="session")
def cube4d():
    return initial_mesh(4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
