import numpy as np
import pytest

from perikdv.constitutive import build_moment_table, power_law
from perikdv.grid import Grid
from perikdv.operators import OperatorContext
from perikdv.solver import SolverConfig, fixed_point_solve

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def model():
    return power_law()


@pytest.fixture(scope="session")
def moments(model):
    return build_moment_table(model)


@pytest.fixture(scope="session")
def grid(moments):
    return Grid.for_kdv(moments.d1)


@pytest.fixture(scope="session")
def ctx_cache(model, grid, moments):
    cache = {}

    def get(eps):
        if eps not in cache:
            cache[eps] = OperatorContext.build(model, grid, eps, moments=moments)
        return cache[eps]
    return get


@pytest.fixture(scope="session")
def solution_02(ctx_cache):
    return fixed_point_solve(ctx_cache(0.2), SolverConfig(epsilon=0.2))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion and echo it."""
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record
