import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from reflide.funcspace import GridFunction, GridMismatchError, eval_at, reflect, sup_distance


def test_grid_layout():
    u = GridFunction.constant(1.0, 2.0, 0.5)
    assert np.allclose(u.grid, [-2, -1.5, -1, -0.5, 0, 0.5, 1, 1.5, 2])
    assert u.n_half == 4


def test_incommensurate_step_rejected():
    with pytest.raises(ValueError):
        GridFunction.constant(0.0, 1.0, 0.3)


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        GridFunction(1.0, 0.5, np.array([0, np.nan, 0, 0, 0.0]))


def test_samples_read_only():
    u = GridFunction.constant(0.0, 1.0, 0.5)
    with pytest.raises(ValueError):
        u.samples[0] = 1.0


def test_linear_interpolation_and_clamp():
    u = GridFunction.from_callable(lambda t: 2 * t, 1.0, 0.25)
    assert eval_at(u, 0.1) == pytest.approx(0.2)
    assert u(np.array([-5.0, 5.0])) == pytest.approx([-2.0, 2.0])


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        sup_distance(GridFunction.constant(0, 1.0, 0.5), GridFunction.constant(0, 1.0, 0.25))


samples = arrays(np.float64, 21, elements=st.floats(-1e6, 1e6, allow_nan=False))


@given(samples)
def test_reflection_is_involution(s):
    u = GridFunction(1.0, 0.1, s)
    assert np.array_equal(reflect(reflect(u)).samples, u.samples)
    assert reflect(u)(0.3) == pytest.approx(u(-0.3), abs=1e-9 * (1 + np.max(np.abs(s))))


@given(samples, samples, samples)
def test_sup_distance_is_metric(a, b, c):
    u, v, w = (GridFunction(1.0, 0.1, x) for x in (a, b, c))
    assert sup_distance(u, u) == 0.0
    assert sup_distance(u, v) == sup_distance(v, u)
    assert sup_distance(u, w) <= sup_distance(u, v) + sup_distance(v, w) + 1e-9


@given(samples)
@settings(max_examples=25, deadline=None)
def test_csv_round_trip_exact(tmp_path_factory, s):
    path = tmp_path_factory.mktemp("csv") / "u.csv"
    u = GridFunction(1.0, 0.1, s)
    u.to_csv(path)
    back = GridFunction.from_csv(path)
    assert np.array_equal(back.samples, u.samples)
    assert back.same_grid(u)
    assert path.read_text().splitlines()[0] == "t,u"


def test_csv_header_checked(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n0,0\n")
    with pytest.raises(ValueError):
        GridFunction.from_csv(p)
