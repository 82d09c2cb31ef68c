from __future__ import annotations

import numpy as np
import pytest

from amw._backend import KERNELS
from amw.data import Dataset, ModelSpec

# acceptance results, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(params=sorted(KERNELS))
def kernel(request):
    return KERNELS[request.param]


def make_linear_data(n=200, p=3, seed=0, effect=1.0, c=0.5):
    """Small confounded dataset with a linear outcome and logistic treatment."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    e = 1 / (1 + np.exp(-c * x.sum(axis=1)))
    a = (rng.random(n) < e).astype(int)
    y = x @ np.linspace(1, -1, p) + effect * a + rng.standard_normal(n)
    names = tuple(f"x{j}" for j in range(p))
    return Dataset(y, a, x, names), ModelSpec.same(names)


@pytest.fixture
def linear_data():
    return make_linear_data()


@pytest.fixture
def two_unit():
    """Treated Y=3, control Y=1; the hand examples use u ≡ 0 and e = 0.5."""
    return Dataset([3.0, 1.0], [1, 0], [[0.0], [1.0]], ("x",))
