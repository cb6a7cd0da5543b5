import numpy as np
import pytest

from phaseopt import phasespace as ps
from phaseopt import states as st

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def w1_grid():
    return ps.rasterize(st.wigner_radial(st.StateSpec(1)))


@pytest.fixture(scope="session")
def w2_grid():
    return ps.rasterize(st.wigner_radial(st.StateSpec(2)))


@pytest.fixture(scope="session")
def w0_grid():
    return ps.rasterize(st.wigner_radial(st.StateSpec(0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
