import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fbmhit.svf import (
    IncrementVariance,
    RegVarSpec,
    SlowVarySpec,
    check_concavity_window,
    compute_c_alpha,
    delta_sq_quadrature,
    drift_modulus,
    ell_theta,
    lemma41_check,
    regularity_conditions,
)


def c_alpha_closed_form(alpha):
    """(2/pi) int (1 - cos s) s^(-1-2a) ds = -(2/pi) Gamma(-2a) cos(pi a)."""
    return float(-2 / mpmath.pi * mpmath.gamma(-2 * alpha) * mpmath.cos(mpmath.pi * alpha))


def test_c_half_is_one():
    assert abs(compute_c_alpha(0.5) - 1.0) < 1e-8


@pytest.mark.parametrize("alpha", [0.05, 0.25, 0.3, 0.7, 0.9])
def test_c_alpha_gamma_oracle(alpha):
    assert compute_c_alpha(alpha) == pytest.approx(c_alpha_closed_form(alpha), rel=1e-8)


@pytest.mark.parametrize("h", [0.1, 0.5, 1.0])
def test_delta_sq_brownian(h):
    assert delta_sq_quadrature(0.5, SlowVarySpec.constant(1.0), h) == pytest.approx(h, rel=1e-6)


def test_delta_sq_constant_scaling():
    # doubling the constant halves the variance
    a = delta_sq_quadrature(0.3, SlowVarySpec.constant(1.0), 0.2)
    b = delta_sq_quadrature(0.3, SlowVarySpec.constant(2.0), 0.2)
    assert b == pytest.approx(a / 2, rel=1e-8)
    assert a == pytest.approx(compute_c_alpha(0.3) * 0.2**0.6, rel=1e-7)


def test_delta_sq_log_power_mpmath():
    # independent oracle: period-by-period mpmath quadrature plus a mean tail
    spec = SlowVarySpec.log_power(1.0)
    h = 0.05
    period = 2 * mpmath.pi / h

    def integrand(x):
        return (1 - mpmath.cos(x * h)) / (x**2 * spec.L(float(x)))

    n_periods = 1500
    body = mpmath.quad(integrand, [0, spec.x0] + [period * k for k in range(1, n_periods + 1)])
    X = period * n_periods
    tail = (mpmath.log(X) + 1) / X  # int_X^inf log(x) / x^2 dx, cosine part negligible
    ref = 2 / mpmath.pi * (body + tail)
    assert delta_sq_quadrature(0.5, spec, h) == pytest.approx(float(ref), rel=1e-6)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        compute_c_alpha(1.0)
    with pytest.raises(ValueError):
        SlowVarySpec("log_power", beta=-1)
    with pytest.raises(ValueError):
        SlowVarySpec("bogus")
    with pytest.raises(ValueError):
        ell_theta(SlowVarySpec(), 0.5, 2.0)
    with pytest.raises(ValueError):
        drift_modulus(0.5, SlowVarySpec(), 1.0)


@pytest.mark.parametrize("spec", [SlowVarySpec.log_power(1.0), SlowVarySpec.log_power(2.5),
                                  SlowVarySpec.exp_log_power(0.5)])
@settings(max_examples=30, deadline=None)
@given(lam=st.floats(0.25, 4.0))
def test_slow_variation(spec, lam):
    # log L(lam x) - log L(x) at x = exp(1e8)
    lx = 1e8
    assert abs(spec.log_L_at_log(lx + math.log(lam)) - spec.log_L_at_log(lx)) < 1e-3


def test_roundtrip_dict():
    for spec in (SlowVarySpec.constant(2.0), SlowVarySpec.log_power(1.5), SlowVarySpec.exp_log_power(0.3)):
        assert SlowVarySpec.from_dict(spec.to_dict()) == spec


def test_increment_variance_table_matches_quadrature():
    spec = SlowVarySpec.log_power(1.0)
    iv = IncrementVariance(0.5, spec)
    for h in (3.3e-4, 0.0123, 0.377):
        assert iv(h) == pytest.approx(delta_sq_quadrature(0.5, spec, h), rel=1e-5)
    assert iv(0.0) == 0.0
    with pytest.raises(ValueError):
        iv(1.5)


def test_increment_variance_asymptotics():
    iv = IncrementVariance(0.5, SlowVarySpec.log_power(1.0))
    # slowly converging ratio, close to 1 at the small end of the table
    assert np.all(np.abs(iv.asymptotic_ratio() - 1) < 0.1)


def test_increment_variance_monotone():
    iv = IncrementVariance(0.4, SlowVarySpec.exp_log_power(0.5))
    h = np.geomspace(1e-8, 1.0, 200)
    assert np.all(np.diff(iv(h)) > 0)


def test_concavity_window_and_lemma41():
    v = RegVarSpec(0.5, SlowVarySpec.log_power(1.0))
    x2, rep = check_concavity_window(v)
    assert 0 < x2 <= 1
    assert not rep["empty"]
    res = lemma41_check(v, x2, x2 / 4)
    assert res["passed"]


def test_power_window_is_whole_interval():
    x2, _ = check_concavity_window(RegVarSpec(0.5, SlowVarySpec.constant()))
    assert x2 == pytest.approx(1.0)


def test_regularity_conditions_vanish():
    rep = regularity_conditions(SlowVarySpec.log_power(1.0))
    assert abs(rep["x_eps_prime_at_infinity"]["value"][-1]) < 1e-4
    assert rep["liminf_L_at_infinity"] > 0
