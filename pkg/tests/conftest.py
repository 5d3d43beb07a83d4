import numpy as np
import pytest

from fdtau.domain import SparseSample, Subject

ACCEPTANCE_LINES = []


def sparse_sample(n, curve, noise_sd, rng, per_subject=5, grid=None, responses=None):
    """Subjects observed at ``per_subject`` distinct points of ``grid``."""
    grid = np.linspace(0.0, 1.0, 56) if grid is None else grid
    subjects = []
    for i in range(n):
        t = np.sort(rng.choice(grid, per_subject, replace=False))
        subjects.append(Subject(t, curve(i, t) + rng.normal(0.0, noise_sd, per_subject)))
    y = rng.normal(size=n) if responses is None else responses
    return SparseSample(tuple(subjects), y)


@pytest.fixture
def make_sparse():
    return sparse_sample


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
