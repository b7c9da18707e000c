import numpy as np
import pytest

from gpground.cloud_io import PointCloud

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cloud_of():
    def make(rows):
        return PointCloud(np.asarray(rows, dtype=float).reshape(-1, 3))
    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
