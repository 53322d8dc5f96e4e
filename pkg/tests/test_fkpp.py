import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twotype_bbm.fkpp import (PdeError, PdeGrid, advance, front_speed, initial_grid,
                              level_crossing, recentre, stable_dt, step)
from twotype_bbm.phase import SQRT2, ModelParams, front_params

C3 = ModelParams(2.0, 0.5, 1.0)


def _flat(value, n=200, dx=0.1):
    q = np.full(n, value)
    return PdeGrid(dx, stable_dt(C3, dx), 0.0, q, q.copy())


@pytest.mark.parametrize("value", [0.0, 1.0])
def test_fixed_points(value):
    g = _flat(value)
    for _ in range(20):
        g = step(g, C3)
    assert np.all(g.q == value) and np.all(g.r == value)
    g2 = advance(_flat(value), C3, 50)
    assert np.all(g2.q == value)


def test_stability_bound():
    assert stable_dt(ModelParams(1.0, 4.0), 0.1) == pytest.approx(0.9 * 0.01 / 4.0)
    assert stable_dt(ModelParams(1.0, 0.5), 0.1) == pytest.approx(0.9 * 0.01 / 1.0)
    with pytest.raises(ValueError):
        initial_grid(C3, 0.1, dt=0.1)
    g = initial_grid(C3, 0.1)
    with pytest.raises(PdeError, match="stability"):
        step(g, C3, dt=0.1)


def test_initial_data():
    g = initial_grid(C3, 0.05, width=100.0, A=10.0)
    x = g.x
    assert np.all(g.u[x < -10] == 1.0) and np.all(g.u[x > 10] == 0.0)
    assert level_crossing(g, "u") == pytest.approx(0.0, abs=1e-9)


def test_numba_and_numpy_steps_agree():
    a = initial_grid(C3, 0.1, width=100.0)
    b = initial_grid(C3, 0.1, width=100.0)
    for _ in range(30):
        b = step(b, C3)
    advance(a, C3, 30)
    np.testing.assert_allclose(a.q, b.q, atol=1e-13)
    np.testing.assert_allclose(a.r, b.r, atol=1e-13)
    assert a.t == pytest.approx(b.t)


def _one_step_error(dt):
    g = initial_grid(C3, 0.2, width=60.0)
    advance(g, C3, 200)
    coarse = step(g, C3, dt)
    fine = g
    for _ in range(10):
        fine = step(fine, C3, dt / 10)
    return np.max(np.abs(coarse.q - fine.q))


def test_single_step_consistency():
    dt = stable_dt(C3, 0.2)
    e1, e2 = _one_step_error(dt), _one_step_error(dt / 2)
    assert 3.0 < e1 / e2 < 5.0


def test_range_violation_is_reported():
    g = _flat(0.5)
    g.q[50] = 1.5
    with pytest.raises(PdeError, match="range"):
        advance(g, C3, 1)


def test_monotonicity_violation_is_reported():
    g = initial_grid(C3, 0.1, width=100.0)
    g.q[700] = 0.9  # a bump ahead of the front
    with pytest.raises(PdeError, match="monotonicity"):
        advance(g, C3, 100, monotone_check=1)


@settings(deadline=None, max_examples=15)
@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0), st.floats(0.0, 2.0))
def test_range_and_monotone_preserved(beta, s2, alpha):
    p = ModelParams(beta, s2, alpha)
    g = initial_grid(p, 0.2, width=80.0)
    advance(g, p, 400, monotone_check=50)
    for c in (g.q, g.r):
        assert c.min() >= 0.0 and c.max() <= 1.0
        assert np.all(np.diff(c) <= 1e-15)


def test_recentre_shifts_window():
    g = initial_grid(C3, 0.1, width=100.0)
    y0 = g.y_lo
    front = level_crossing(g, "u")
    assert recentre(g, front + 20.0) > 0
    assert g.y_lo > y0
    assert level_crossing(g, "u") == pytest.approx(front, abs=1e-9)


def test_short_run_speeds():
    f = front_speed(C3, t_end=30.0, dx=0.1)
    assert abs(f.speed_u / 1.5 - 1) < 0.1
    # the type-2 field obeys an uncoupled KPP and moves at sqrt(2)
    assert abs(f.speed_v / SQRT2 - 1) < 0.1
    assert np.all(np.diff(f.front_u) > 0)


def test_decoupled_u_speed():
    p = ModelParams(1.5, 0.9, 0.0)
    f = front_speed(p, t_end=30.0, dx=0.1)
    assert abs(f.speed_u / math.sqrt(2 * 1.5 * 0.9) - 1) < 0.1


def test_region_ordering_matches_closed_forms():
    pts = [ModelParams(0.5, 1.0, 1.0), ModelParams(1.5, 0.9, 1.0), C3]
    measured = [front_speed(p, t_end=40.0, dx=0.1).speed_u for p in pts]
    closed = [front_params(p).v for p in pts]
    assert np.argsort(measured).tolist() == np.argsort(closed).tolist()
    assert measured[2] > SQRT2 and measured[2] > math.sqrt(2 * 2.0 * 0.5)
