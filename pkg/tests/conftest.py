import numpy as np
import pytest

from mvbgraph.data import Dataset


def random_dataset(rng, n, K, p):
    return Dataset(rng.standard_normal((n, p)), rng.integers(0, 2, size=(n, K)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
