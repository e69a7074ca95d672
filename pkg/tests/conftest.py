import math

import numpy as np
import pytest

from reflide.expr import parse
from reflide.funcspace import GridFunction
from reflide.operator import ProblemSpec
from reflide.solver import check_thm2, picard_solve

SQRT2 = math.sqrt(2.0)
DECAYING_PROFILE = "(exp(-abs(t))/9)*(sin(x1)+cos(x2))"


def decaying_problem(**overrides) -> ProblemSpec:
    kw = dict(
        f=DECAYING_PROFILE,
        h=DECAYING_PROFILE,
        K="exp(-s)",
        beta="t-p",
        rho="exp(sin(t))",
        p_delay=0.5,
        kernel_decay=1.0,
    )
    kw.update(overrides)
    return ProblemSpec.from_sources(SQRT2, 1.0, **kw)


@pytest.fixture(scope="session")
def ref_problem():
    return decaying_problem()


@pytest.fixture(scope="session")
def ref_contraction(ref_problem):
    prof = parse("exp(-abs(t))/9")
    return check_thm2(ref_problem, prof, prof, 2.0)


@pytest.fixture(scope="session")
def ref_trace(ref_problem, ref_contraction):
    return picard_solve(ref_problem, GridFunction.constant(0.0), contraction=ref_contraction, store_iterates=True)


@pytest.fixture(scope="session")
def ref_trace_from_ten(ref_problem, ref_contraction):
    return picard_solve(ref_problem, GridFunction.constant(10.0), contraction=ref_contraction)


@pytest.fixture
def small_grid():
    return dict(half_width=10.0, step=0.05)


def grid_of(fn, half_width=10.0, step=0.05):
    return GridFunction.from_callable(fn, half_width, step)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
