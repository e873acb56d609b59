import numpy as np
import pytest

# One line per acceptance criterion, filled in by test_acceptance.py and
# echoed at the end of the run so it is visible without ``-s``.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_configuration(rng, n, lo=0.0, hi=1.0, min_gap=1e-3):
    """Sorted points in [lo, hi] with gaps bounded below, endpoints included."""
    w = rng.uniform(0.2, 1.0, size=n)
    w = w / w.sum()
    w = np.maximum(w, min_gap)
    w = w / w.sum()
    x = lo + (hi - lo) * np.concatenate([[0.0], np.cumsum(w)])
    x[-1] = hi
    return x


def random_interior_configuration(rng, n, lo=0.05, hi=0.95):
    return random_configuration(rng, n, lo, hi)
