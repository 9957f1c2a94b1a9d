import sys
from pathlib import Path

import numpy as np
import pytest

from coopt.generators import SIMPLE5_EDGES, random_problem
from coopt.problem import Problem, read_ncop

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture
def simple5() -> Problem:
    return read_ncop(FIXTURES / "simple5.ncop")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def two_var() -> Problem:
    # tiny worked example: optimum energy 0 at (0, 1)
    return Problem(
        [2, 2],
        [np.array([0.0, 1.0]), np.array([1.0, 0.0])],
        {(0, 1): np.array([[1.0, 0.0], [0.0, 1.0]])},
    )


def random_simple5(seed: int, size: int = 3) -> Problem:
    return random_problem(SIMPLE5_EDGES, [size] * 5, np.random.default_rng(seed))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.REPORT):
        terminalreporter.write_line(mod.REPORT[n])
