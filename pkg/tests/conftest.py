import numpy as np
import pytest

from hartree_lab.grid import WaveFunction, build_grid

# filled by test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def grid_small():
    return build_grid(800, 40.0)


@pytest.fixture(scope="session")
def gaussian3(grid_small):
    return WaveFunction.from_u(grid_small, lambda r: np.exp(-0.5 * r * r)).normalized(3.0)
