import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SQRT2, grid_of, decaying_problem
from reflide.funcspace import GridFunction
from reflide.operator import (
    GammaOperator,
    ProblemSpec,
    ProblemSpecError,
    assemble_F,
    forcing_bounds,
    gamma_apply,
    gamma_pointwise,
    linear_solution,
)

LINEAR_SINE_FORCING = "cos(t) - (2^0.5 - 1)*sin(t)"


def test_lambda_and_geometry():
    ps = ProblemSpec.from_sources(SQRT2, 1.0)
    assert ps.lam == pytest.approx(1.0)
    assert ps.geom == pytest.approx(2 * SQRT2 + 2)


@pytest.mark.parametrize("a, b", [(1.0, 1.0), (1.0, 2.0), (0.0, 0.5)])
def test_non_positive_lambda_squared_rejected(a, b):
    with pytest.raises(ProblemSpecError, match="a²−b² must be positive"):
        ProblemSpec.from_sources(a, b)


def test_missing_reflection_needs_flag():
    with pytest.raises(ProblemSpecError):
        ProblemSpec.from_sources(1.0, 0.0)
    assert ProblemSpec.from_sources(1.0, 0.0, allow_no_reflection=True).lam == 1.0


def test_decreasing_beta_rejected():
    with pytest.raises(ProblemSpecError):
        ProblemSpec.from_sources(SQRT2, 1.0, beta="-t")
    with pytest.raises(ProblemSpecError):
        ProblemSpec.from_sources(SQRT2, 1.0, beta="t^2")


def test_slot_variables_checked():
    with pytest.raises(ProblemSpecError):
        ProblemSpec.from_sources(SQRT2, 1.0, K="t*s")
    with pytest.raises(ProblemSpecError):
        ProblemSpec.from_sources(SQRT2, 1.0, rho="x1")
    ProblemSpec.from_sources(SQRT2, 1.0, f="p*x1 + pi", p_delay=2.0)


def test_negative_a_is_flagged_not_rejected():
    with pytest.warns(UserWarning):
        ps = ProblemSpec.from_sources(-2.0, 1.0)
    assert ps.notes and ps.lam == pytest.approx(math.sqrt(3))


def test_rhs_at_zero_for_decaying_profile(ref_problem):
    u = GridFunction.constant(0.0)
    val = assemble_F(ref_problem, u, 0.0)
    # f = 1/9; each kernel term is int_0^inf e^{-s} e^{-s}/9 ds = 1/18
    assert val.f_part == pytest.approx(1 / 9, abs=1e-12)
    assert val.kernel_forward == pytest.approx(1 / 18, abs=1e-8)
    assert val.kernel_backward == pytest.approx(1 / 18, abs=1e-8)
    assert val.total == pytest.approx(2 / 9, abs=2e-8)


def test_kernel_terms_vanish_without_kernel():
    ps = decaying_problem(K="0", kernel_decay=None)
    val = assemble_F(ps, GridFunction.constant(0.3), np.array([-1.0, 0.0, 2.5]))
    assert np.all(val.kernel_forward == 0.0) and np.all(val.kernel_backward == 0.0)


def test_rhs_at_off_grid_points_matches_closed_form():
    ps = ProblemSpec.from_sources(SQRT2, 1.0, h="exp(-abs(t))", K="exp(-s)", kernel_decay=1.0)
    u = GridFunction.constant(0.0, 10.0, 0.05)
    t = np.array([-0.7, -0.013, 0.02, 0.4321])

    def forward(t):
        # int_0^inf e^{-s} e^{-|t+s|} ds
        if t >= 0:
            return math.exp(-t) / 2
        return math.exp(t) * (0.5 - t)

    val = assemble_F(ps, u, t)
    expect_f = [forward(x) for x in t]
    expect_b = [forward(-x) for x in t]
    assert val.kernel_forward == pytest.approx(expect_f, abs=1e-8)
    assert val.kernel_backward == pytest.approx(expect_b, abs=1e-8)


def test_linear_solution_recovers_sine():
    ps = ProblemSpec.from_sources(SQRT2, 1.0, f=LINEAR_SINE_FORCING)
    G = lambda y: np.cos(y) - (SQRT2 - 1) * np.sin(y)
    t = np.array([-3.0, 0.0, 0.7, 5.0])
    assert linear_solution(ps, G, t, bound=3.0) == pytest.approx(np.sin(t), abs=1e-7)


def test_gamma_of_forcing_only_in_t():
    ps = ProblemSpec.from_sources(SQRT2, 1.0, f=LINEAR_SINE_FORCING)
    x = grid_of(np.cos)
    out = gamma_apply(ps, x)
    assert np.max(np.abs(out.samples - np.sin(out.grid))) < 1e-7


@given(st.floats(0.2, 5), st.floats(-0.95, 0.95).filter(lambda r: abs(r) > 0.05), st.floats(-3, 3))
@settings(max_examples=15, deadline=None)
def test_constant_forcing_gives_constant_solution(a, ratio, g0):
    b = ratio * a
    ps = ProblemSpec.from_sources(a, b, f=repr(g0) if g0 >= 0 else f"-{-g0!r}")
    out = gamma_apply(ps, GridFunction.constant(0.0, 5.0, 0.1))
    assert np.max(np.abs(out.samples + g0 / (a + b))) < 1e-7


def test_lattice_matches_nested_quadrature(ref_problem):
    x = GridFunction.from_callable(lambda t: 0.3 * np.sin(t) * np.exp(-0.1 * abs(t)))
    lattice = GammaOperator(ref_problem)(x)
    for t in (0.0, -0.7):
        i = int(round((t + x.half_width) / x.step))
        assert gamma_pointwise(ref_problem, x, t) == pytest.approx(lattice.samples[i], abs=1e-9)


@pytest.mark.parametrize("h", ["exp(-abs(t))/9", "exp(-t^2)/9"])
def test_lattice_converges_at_first_level_with_kinks(h):
    ps = ProblemSpec.from_sources(SQRT2, 1.0, h=h, K="exp(-s)", kernel_decay=1.0)
    op = GammaOperator(ps)
    op(GridFunction.constant(0.0, 10.0, 0.05))
    assert op.level == 0


def test_level_never_decreases(ref_problem):
    op = GammaOperator(ref_problem, start_level=2)
    op(GridFunction.constant(0.0, 10.0, 0.05))
    assert op.level >= 2


def test_forcing_bounds_dominate(ref_problem):
    x = GridFunction.constant(0.5, 10.0, 0.05)
    b = forcing_bounds(ref_problem, x)
    t = np.linspace(-10, 10, 41)
    assert np.all(np.abs(assemble_F(ref_problem, x, t).total) <= b.F_sup + 1e-9)


_small = st.lists(st.floats(-2, 2), min_size=5, max_size=5)


@given(_small, _small)
@settings(max_examples=8, deadline=None)
def test_gamma_contracts_by_reported_factor(ref_problem, ref_contraction, cx, cy):
    t = np.linspace(-10, 10, 401)
    basis = np.stack([np.ones_like(t), np.sin(t), np.cos(0.7 * t), np.exp(-t * t), np.tanh(t)])
    x = GridFunction(10.0, 0.05, np.asarray(cx) @ basis)
    y = GridFunction(10.0, 0.05, np.asarray(cy) @ basis)
    gx, gy = gamma_apply(ref_problem, x), gamma_apply(ref_problem, y)
    d = np.max(np.abs(x.samples - y.samples))
    assert np.max(np.abs(gx.samples - gy.samples)) <= ref_contraction.factor * d + 1e-7
