import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from twotype_bbm.engine import TYPE1, TYPE2, SimConfig, simulate
from twotype_bbm.oracle import (QuadratureError, QuadratureSpec, expected_type1_above,
                                expected_type2_above, expected_type2_count, gaussian_sf,
                                gaussian_tail_bound, ld_first_moment)
from twotype_bbm.phase import ModelParams


def test_type1_above_examples():
    assert expected_type1_above(ModelParams(1, 1), 4, 0) == pytest.approx(27.299075, rel=1e-6)
    assert expected_type1_above(ModelParams(2, 0.5), 1, 1) == pytest.approx(0.58116, rel=1e-4)
    assert expected_type1_above(ModelParams(2, 0.5), 1, -60) == pytest.approx(math.exp(2))


def test_type2_count_examples():
    assert expected_type2_count(ModelParams(2, 1, 1), 1) == pytest.approx(4.67077, abs=1e-5)
    assert expected_type2_count(ModelParams(2, 1, 0), 1) == 0.0
    assert expected_type2_count(ModelParams(1, 1, 2), 1) == pytest.approx(5.43656, abs=1e-5)


def test_type2_count_beta_one_limit_is_continuous():
    near = expected_type2_count(ModelParams(1 + 1e-6, 1, 2), 1)
    assert near == pytest.approx(2 * math.e, rel=1e-5)


def test_type2_above_examples():
    p = ModelParams(2, 0.5, 1)
    assert expected_type2_above(p, 1, 0) == pytest.approx(0.5 * math.e * (math.e - 1), rel=1e-10)
    assert expected_type2_above(p, 1, -80) == pytest.approx(expected_type2_count(p, 1), rel=1e-9)
    assert expected_type2_above(ModelParams(2, 0.5, 0), 1, 0) == 0.0


def test_type2_above_independent_quadrature():
    p = ModelParams(2, 0.5, 1)
    ref = integrate.quad(lambda s: math.exp(2 * s + 1 - s)
                         * stats.norm.sf(1.5, scale=math.sqrt(0.5 * s + 1 - s)), 0, 1,
                         epsabs=1e-13)[0]
    assert expected_type2_above(p, 1, 1.5) == pytest.approx(ref, rel=1e-9)


def test_simpson_rule_and_errors():
    p = ModelParams(2, 0.5, 1)
    a = expected_type2_above(p, 1, 1.0)
    s, err = expected_type2_above(p, 1, 1.0, QuadratureSpec("simpson", 1e-10, 1e-10, 4096),
                                  return_error=True)
    assert abs(a - s) < 1e-8 and err >= 0
    with pytest.raises(QuadratureError):
        expected_type2_above(p, 1, 1.0, QuadratureSpec("simpson", 1e-16, 1e-16, 8))
    with pytest.raises(ValueError):
        QuadratureSpec("trapezoid")
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)


def test_gaussian_tail_examples():
    e, b = gaussian_tail_bound(1.0)
    assert (e, b) == pytest.approx((0.158655, 0.241971), abs=1e-6)
    e, b = gaussian_tail_bound(3.0)
    assert e == pytest.approx(0.0013499, rel=1e-4) and b == pytest.approx(0.0014773, rel=1e-4)
    e, b = gaussian_tail_bound(8.0)
    assert 1 < b / e < 1.02
    with pytest.raises(ValueError):
        gaussian_tail_bound(0.0)


def test_gaussian_sf_relative_accuracy_deep_tail():
    assert float(gaussian_sf(30.0)) == pytest.approx(stats.norm.sf(30.0), rel=1e-13)


def test_ld_bound_examples():
    assert ld_first_moment(1.8, 4, 0) == pytest.approx(8.687e-3, rel=1e-3)
    assert ld_first_moment(1.8, 4, 40) < 1e-100
    with pytest.raises(ValueError):
        ld_first_moment(1.2, 4)


@settings(deadline=None, max_examples=40)
@given(st.floats(0.3, 3), st.floats(0.2, 3), st.floats(0.1, 2), st.floats(0.2, 2),
       st.floats(-2, 3), st.floats(0.05, 1))
def test_type2_above_monotonicity(beta, s2, alpha, t, x, d):
    p = ModelParams(beta, s2, alpha)
    base = expected_type2_above(p, t, x)
    assert expected_type2_above(p, t, x + d) <= base * (1 + 1e-9)
    assert expected_type2_above(p, t + d, x) >= base * (1 - 1e-9)
    assert expected_type2_above(ModelParams(beta, s2, alpha + d), t, x) >= base


@settings(deadline=None, max_examples=30)
@given(st.floats(0.3, 3), st.floats(0.2, 3), st.floats(0.1, 2), st.floats(0.2, 2),
       st.floats(-2, 3))
def test_quadrature_self_consistency(beta, s2, alpha, t, x):
    p = ModelParams(beta, s2, alpha)
    v1, e1 = expected_type2_above(p, t, x, QuadratureSpec(abs_tol=1e-10, rel_tol=1e-8),
                                  return_error=True)
    v2 = expected_type2_above(p, t, x, QuadratureSpec(abs_tol=5e-11, rel_tol=5e-9))
    assert abs(v1 - v2) <= max(e1, 1e-12 * abs(v1))


def test_mc_type2_above_matches_quadrature():
    p = ModelParams(2, 0.5, 1)
    n = 20_000
    counts = np.empty(n)
    for k in range(n):
        x = simulate(p, SimConfig(1.0, rng_seed=k)).final
        counts[k] = np.count_nonzero(x.of_type(TYPE2) >= 1.5)
    q = expected_type2_above(p, 1, 1.5)
    assert abs(counts.mean() - q) < 3 * counts.std(ddof=1) / math.sqrt(n)


def test_mc_type1_above_matches_closed_form():
    p = ModelParams(2, 0.5, 1)
    n = 20_000
    counts = np.array([np.count_nonzero(simulate(p, SimConfig(1.0, rng_seed=k)).final
                                        .of_type(TYPE1) >= 1.0) for k in range(n)])
    assert abs(counts.mean() - 0.58116) < 3 * counts.std(ddof=1) / math.sqrt(n)
