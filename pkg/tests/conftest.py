import numpy as np
import pytest

from homodyne_qdt.reconstruction import ReconstructionProblem, fit
from homodyne_qdt.simulator import analytic_probe, build_probe_set
from homodyne_qdt.states import IDEAL, NoiseParams, QuadratureGrid

WINDOW = QuadratureGrid(-2.0, 2.0, 81)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def window():
    return WINDOW


def noiseless_fit(truth, kind="reduced_25", grid=WINDOW, config=None):
    probes = [analytic_probe(s, truth, grid) for s in build_probe_set(kind)]
    problem = ReconstructionProblem(probes, grid, grid)
    return (fit(problem) if config is None else fit(problem, config)), problem


@pytest.fixture(scope="session")
def ideal_fit():
    return noiseless_fit(IDEAL)


@pytest.fixture(scope="session")
def lossy_fit():
    """Exact detected densities from an eta = 0.81 detector without electronic noise."""
    return noiseless_fit(NoiseParams(0.81, 0.0))


# PASS/FAIL lines collected by the acceptance tests
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
