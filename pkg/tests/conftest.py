import numpy as np
import pytest

from fermicert import fock


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def lam4():
    return fock.chain(4)


@pytest.fixture
def lam6():
    return fock.chain(6)
