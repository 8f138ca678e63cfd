import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from spatialrf.samples import SampleTable  # noqa: E402


def make_table(features, response, task="regression", groups=None, xy=None, names=None):
    features = np.asarray(features, dtype=float)
    n, p = features.shape
    ids = np.arange(n)
    groups = np.zeros(n, dtype=int) if groups is None else np.asarray(groups)
    if xy is None:
        xy = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    xy = np.asarray(xy, dtype=float)
    names = names or [f"f{j + 1}" for j in range(p)]
    return SampleTable.from_arrays(ids, groups, xy[:, 0], xy[:, 1], features, response, names, task)


@pytest.fixture
def table_factory():
    return make_table


@pytest.fixture
def clustered_table():
    """Regression table of six spatial clusters with a noiseless rule y = f1."""
    rng = np.random.default_rng(3)
    groups = np.repeat(np.arange(6), 20)
    centers = rng.uniform(0, 1000, size=(6, 2))
    xy = centers[groups] + rng.normal(0, 5, size=(120, 2))
    f = rng.normal(size=(120, 3))
    return make_table(f, f[:, 0].copy(), groups=groups, xy=xy)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][1:].rstrip(":"))):
            terminalreporter.write_line(line)
