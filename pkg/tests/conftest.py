from __future__ import annotations

import numpy as np
import pytest

from synthmetric.dataset import CATEGORICAL, NUMERIC, ColumnSchema, from_arrays
from synthmetric.synth import MvnSpec, equicorrelation, mvn_sample


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def mvn_data():
    def make(n=400, dim=4, rho=0.5, seed=0):
        spec = MvnSpec(np.zeros(dim), equicorrelation(dim, rho), n)
        return mvn_sample(spec, np.random.default_rng(seed))
    return make


MIXED_SCHEMA = (
    ColumnSchema("age", NUMERIC),
    ColumnSchema("sex", CATEGORICAL, ("f", "m")),
    ColumnSchema("region", CATEGORICAL, ("a", "b", "c")),
    ColumnSchema("income", NUMERIC),
)


@pytest.fixture
def mixed_data():
    def make(n=300, seed=0):
        r = np.random.default_rng(seed)
        age = r.uniform(20, 70, n)
        sex = r.integers(0, 2, n)
        region = r.integers(0, 3, n)
        income = 10 + 0.05 * age + 0.5 * sex - 0.3 * region + r.normal(0, 1, n)
        return from_arrays({"age": age, "sex": sex, "region": region, "income": income},
                           MIXED_SCHEMA)
    return make


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
