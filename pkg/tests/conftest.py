import numpy as np
import pytest

from smoothdml.data import Dataset
from smoothdml.simulation import DgpConfig, draw_dataset

# lines collected by the acceptance suite and echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture
def sim_small():
    return draw_dataset(DgpConfig(n=400, seed=11))


@pytest.fixture
def tiny_dataset():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(60, 2))
    d = np.tile([0, 1], 30)
    y = z[:, 0] + d * z[:, 1] + 0.1 * rng.normal(size=60)
    return Dataset(y, d, z)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
