import json
import pathlib
import sys

import numpy as np
import pytest

HERE = pathlib.Path(__file__).parent
sys.path.insert(0, str(HERE))

from abslope import Dataset  # noqa: E402


def load_frozen(name):
    with open(HERE / "data" / name) as fh:
        return json.load(fh)


@pytest.fixture
def frozen():
    return load_frozen


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_problem(n=60, p=8, k=3, amp=4.0, miss=0.1, seed=0):
    """Complete-data truth plus an MCAR-masked copy."""
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:k] = amp
    y = X @ beta + r.standard_normal(n)
    mask = r.random((n, p)) < miss
    mask[mask.all(axis=1), 0] = False
    return Dataset.from_arrays(np.where(mask, np.nan, X), y, mask=mask), X, beta


# acceptance criteria report, filled by test_acceptance.report()
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
