import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from otbounds.measures import SignedMeasure  # noqa: E402

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_proper(rng, n_max=30, grid=100, scale=10.0):
    n = int(rng.integers(1, n_max + 1))
    sup = np.sort(rng.choice(grid, n, replace=False)) / scale
    return SignedMeasure(sup, rng.dirichlet(np.ones(n)))


def random_signed(rng, n_max=15, grid=20):
    """Signed measure with dyadic weights so sums are exact in floating point."""
    n = int(rng.integers(1, n_max + 1))
    sup = np.sort(rng.choice(grid, n, replace=False)) / 2.0
    return SignedMeasure(sup, rng.integers(-8, 17, n) / 16.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
