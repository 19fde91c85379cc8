import numpy as np
import pytest

from wwbarray.geometry import reference_geometry, wavelength_from_frequency

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def wl():
    return wavelength_from_frequency(77e9)


@pytest.fixture(scope="session")
def mra():
    return reference_geometry("mra")


@pytest.fixture(scope="session")
def uniform_dilated():
    return reference_geometry("uniform_dilated")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
