import numpy as np
import pytest

from momreg.dataset import Dataset, GenSpec, generate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tall_dataset():
    """Well-conditioned N=50, d=5 regression problem."""
    rng = np.random.default_rng(7)
    X = rng.standard_normal((50, 5))
    t = np.array([1.0, -2.0, 0.0, 0.5, 3.0])
    y = X @ t + 0.1 * rng.standard_normal(50)
    return Dataset(X, y)


@pytest.fixture(scope="session")
def reference_data():
    """N=200, d=500, s=10 clean data and the same draw with one gross outlier."""
    clean = generate(GenSpec(seed=0))
    dirty = generate(GenSpec(N_bad3=1, seed=0))
    return clean, dirty


ACCEPTANCE_LINES = []


def report_criterion(number, passed, detail):
    """Record one acceptance result; all lines are printed at the end of the run."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
