import pytest

from ietlab.fixtures import golden_rotation, symmetric_d4_fixture
from ietlab.renorm import rv_orbit


@pytest.fixture(scope="session")
def golden():
    return golden_rotation()


@pytest.fixture(scope="session")
def golden_orbit(golden):
    return rv_orbit(golden, 120)


@pytest.fixture(scope="session")
def d4():
    T, _ = symmetric_d4_fixture()
    return T


@pytest.fixture(scope="session")
def d4_orbit(d4):
    return rv_orbit(d4, 176)
