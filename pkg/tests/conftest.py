import numpy as np
import pytest

from cprojlab import metrics as mt


@pytest.fixture(scope="session")
def fs2():
    return mt.fubini_study(2)


@pytest.fixture(scope="session")
def ortho():
    return mt.orthotoric(mt.default_orthotoric(True))


@pytest.fixture(scope="session")
def mismatched():
    return mt.orthotoric(mt.default_orthotoric(False))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
