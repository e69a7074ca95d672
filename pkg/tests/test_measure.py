import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflide.expr import parse
from reflide.funcspace import GridFunction
from reflide.measure import (
    DECAYING,
    INCONCLUSIVE,
    LEBESGUE,
    NON_DECAYING,
    SUPPORTED,
    VIOLATED,
    ErgodicityReport,
    MeasureError,
    MeasureSpec,
    check_hypotheses,
    ergodic_mean,
    mass,
)

EXP_SIN = MeasureSpec.from_source("exp(sin(t))")
# mpmath, 30 digits
EXP_SIN_MASS_5 = 12.810871664784788
EXP_SIN_MEAN_DECAY_10 = 0.09667018678405070


def shift(c):
    return parse(f"t + {c}").bind("t") if c >= 0 else parse(f"t - {-c}").bind("t")


def test_mass_values():
    assert mass(LEBESGUE, 5.0) == pytest.approx(10.0, abs=1e-12)
    assert mass(EXP_SIN, math.pi) == pytest.approx(7.954926521012845, abs=1e-7)
    assert mass(EXP_SIN, 5.0) == pytest.approx(EXP_SIN_MASS_5, abs=1e-7)
    assert mass(EXP_SIN, 0.0) == 0.0
    with pytest.raises(ValueError):
        mass(LEBESGUE, -1.0)


@given(st.floats(0.1, 20), st.floats(0.1, 20))
@settings(max_examples=30, deadline=None)
def test_mass_additive(r1, dr):
    from reflide.measure import window_mass

    r2 = r1 + dr
    lhs = mass(EXP_SIN, r2) - mass(EXP_SIN, r1)
    rhs = window_mass(EXP_SIN, r1, r2) + window_mass(EXP_SIN, -r2, -r1)
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=4e-8)


@given(st.floats(0.5, 30))
@settings(max_examples=20, deadline=None)
def test_mass_increasing(r):
    assert mass(EXP_SIN, r + 0.1) > mass(EXP_SIN, r)


def test_positive_density_required():
    with pytest.raises(MeasureError):
        MeasureSpec.from_source("sin(t)").check_positive(np.linspace(-5, 5, 101))


def test_ergodic_mean_closed_form():
    rep = ergodic_mean(parse("exp(-abs(t))"), LEBESGUE, [10.0])
    assert rep.means[0] == pytest.approx((1 - math.exp(-10)) / 10, abs=1e-8)


def test_ergodic_mean_weighted_oracle():
    rep = ergodic_mean(parse("exp(-abs(t))"), EXP_SIN, [10.0])
    assert rep.means[0] == pytest.approx(EXP_SIN_MEAN_DECAY_10, abs=1e-8)


def test_zero_function_decays():
    rep = ergodic_mean(parse("0"), EXP_SIN, [1.0, 2.0])
    assert rep.means == (0.0, 0.0)
    assert rep.verdict == DECAYING


@given(st.floats(0.1, 10))
@settings(max_examples=10, deadline=None)
def test_constant_mean_equals_constant(c):
    rep = ergodic_mean(lambda t: c + 0 * t, EXP_SIN, [1.0, 7.5, 30.0])
    assert rep.means == pytest.approx([c] * 3, rel=1e-7)
    assert rep.verdict == NON_DECAYING


@given(st.sampled_from(["exp(-abs(t))", "sin(t)^2", "1/(1+t^2)", "abs(cos(3*t))"]), st.floats(1, 40))
@settings(max_examples=20, deadline=None)
def test_bounded_density_within_e_squared(src, r):
    e = parse(src)
    m_leb = ergodic_mean(e, LEBESGUE, [r]).means[0]
    m_mu = ergodic_mean(e, EXP_SIN, [r]).means[0]
    assert m_leb / math.e**2 - 1e-9 <= m_mu <= m_leb * math.e**2 + 1e-9


@pytest.mark.parametrize("mu", [LEBESGUE, EXP_SIN])
def test_decay_sweep(mu):
    rep = ergodic_mean(parse("exp(-abs(t))"), mu, [5, 10, 20, 40, 80])
    assert rep.verdict == DECAYING
    assert rep.trend_slope == pytest.approx(-1.0, abs=0.05)


def test_four_radius_sweep_is_borderline():
    # 1/r decay over a factor 8 of radii cannot drop below a tenth
    rep = ergodic_mean(parse("exp(-abs(t))"), EXP_SIN, [5, 10, 20, 40])
    assert rep.verdict == INCONCLUSIVE


def test_grid_function_domain_checked():
    u = GridFunction.from_callable(np.sin, 10.0, 0.05)
    with pytest.raises(ValueError):
        ergodic_mean(u, LEBESGUE, [5.0, 20.0])
    rep = ergodic_mean(u, LEBESGUE, [5.0, 10.0])
    assert rep.verdict == NON_DECAYING


def test_report_invariants():
    with pytest.raises(ValueError):
        ErgodicityReport((2.0, 1.0), (0.1, 0.1), 0.0, DECAYING)
    with pytest.raises(ValueError):
        ErgodicityReport((1.0, 2.0), (-0.1, 0.1), 0.0, DECAYING)


def test_hypotheses_for_exp_sin_delay():
    rep = check_hypotheses(EXP_SIN, shift(-0.5), 0.5)
    m, n = rep.m2_pair
    assert m == 0.0 and n <= math.e**2 + 1e-6
    assert rep.m2_verdict == SUPPORTED
    assert rep.m1_verdict == SUPPORTED
    assert rep.h0_translation
    # max rho(t + 1/2)/rho(t) = exp(2 sin(1/4))
    assert rep.h0_lambda_bound == pytest.approx(math.exp(2 * math.sin(0.25)), rel=1e-6)
    assert rep.h0_lambda_bound <= math.exp(0.5)
    assert rep.h0_verdict == SUPPORTED


def test_hypotheses_lebesgue_identity():
    rep = check_hypotheses(LEBESGUE, parse("t").bind("t"))
    assert rep.h0_lambda_bound == pytest.approx(1.0, abs=1e-12)
    assert rep.m2_pair == (0.0, 1.0)
    assert rep.m1_ratio == pytest.approx(1.0)


def test_hypotheses_nonlinear_deformation():
    rep = check_hypotheses(LEBESGUE, parse("2*t").bind("t"), radii=(5.0, 10.0, 20.0))
    assert not rep.h0_translation
    assert rep.h0_lambda_bound == pytest.approx(0.5, rel=1e-4)


def test_growing_density_violates_translation_probe():
    rep = check_hypotheses(MeasureSpec.from_source("exp(t)"), parse("t").bind("t"), radii=(2.0, 4.0, 6.0))
    assert rep.m2_verdict == VIOLATED


def test_non_monotone_beta_rejected():
    with pytest.raises(MeasureError):
        check_hypotheses(LEBESGUE, parse("-t").bind("t"))
