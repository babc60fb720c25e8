import numpy as np
import pytest

from loylab.model import Channel, ContinuumGrid, build_two_level_model, lorentzian_coupling


def weak_two_level(scale=1.0, points=800, h1=None):
    """Reference weak-coupling two-level model used across the suite."""
    grid = ContinuumGrid.uniform(0.0, 4.0, points)
    g = lorentzian_coupling([0.03 * scale, (0.02 + 0.01j) * scale], 2.1, 2.0)
    if h1 is None:
        h1 = np.array([[0.02, 0.01 - 0.005j], [0.01 + 0.005j, -0.01]])
    return build_two_level_model(2.0, h1, [Channel(grid, g)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def weak_model():
    return weak_two_level()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
