from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffmean import kernel

# reference values from 30-digit mpmath quadrature / besselk, frozen here
K0_REF = {0.01: 4.72124473016109494, 1.0: 0.421024438240708333, 10.0: 1.77800623161676518e-05,
          30.0: 2.13247749646305637e-14}
V1_REF = {1.0: 2.96882494684477291, 2.0: 2.62205755429211981, 5.0: 1.80335061169584476,
          20.0: 0.736438497218282066}
CHAIN_REF = {1: math.pi, 2: 17.6950319084543098, 3: 138.738997300255098}


@pytest.mark.parametrize("y,ref", sorted(K0_REF.items()))
def test_k0_reference(y, ref):
    assert kernel.bessel_k0(y) == pytest.approx(ref, rel=1e-12)


def test_k0_regimes_agree_at_switch_points():
    for y in (2.0, 20.0):
        lo = kernel.bessel_k0(y * (1 - 1e-12))
        hi = kernel.bessel_k0(y * (1 + 1e-12))
        assert abs(lo - hi) / hi < 1e-10


def test_k0_direct_quadrature_oracle():
    for y in (0.5, 1.0, 3.0):
        assert kernel.k0_direct(y) == pytest.approx(kernel.bessel_k0(y), rel=1e-7)


def test_k0_rejects_nonpositive():
    with pytest.raises(ValueError):
        kernel.bessel_k0(0.0)
    with pytest.raises(ValueError):
        kernel.bessel_k0(-1.0)


def test_k0_small_argument_bracket():
    lo, hi = kernel.k0_small_argument_bracket(0.01, 0.5)
    assert lo < kernel.bessel_k0(0.01) < hi


def test_k0_exponential_bound_constant_is_finite():
    c = kernel.k0_exponential_constant(0.5)
    assert math.isfinite(c)
    assert kernel.bessel_k0(10.0) < c * math.exp(-10.0)


def test_log_k0_large_argument_no_underflow():
    assert kernel.log_k0(800.0) == pytest.approx(-800.0 + 0.5 * math.log(math.pi / 1600.0), abs=1e-3)


def test_k0_strictly_decreasing():
    y = np.geomspace(1e-6, 60, 2000)
    assert np.all(np.diff(kernel.bessel_k0(y)) < 0)


def test_v1_at_zero_is_pi():
    for method in ("agm", "direct", "spectral"):
        assert kernel.v1(0.0, method=method) == pytest.approx(math.pi, abs=1e-8)


@pytest.mark.parametrize("tau,ref", sorted(V1_REF.items()))
def test_v1_reference(tau, ref):
    assert kernel.v1(tau) == pytest.approx(ref, rel=1e-12)
    assert kernel.v1_scalar(tau) == pytest.approx(ref, rel=1e-12)


def test_v1_direct_and_spectral_agree():
    for tau in (0.0, 0.5, 2.0, 7.5, 20.0):
        d = kernel.v1(tau, method="direct")
        s = kernel.v1(tau, method="spectral")
        assert abs(d - s) < 1e-6


def test_v1_even_and_decreasing():
    t = np.linspace(0.01, 15, 100)
    assert np.max(np.abs(kernel.v1(t) - kernel.v1(-t))) < 1e-10
    assert np.all(np.diff(kernel.v1(t)) < 0)


def test_v_identities():
    assert kernel.v(1.0) == pytest.approx(math.pi, abs=1e-8)
    assert kernel.v(math.cosh(1.0)) == pytest.approx(kernel.v1(1.0), rel=1e-12)
    assert kernel.v(10.0) == pytest.approx(2.29205184139305369, abs=1e-9)
    with pytest.raises(ValueError):
        kernel.v(0.5)


@given(st.floats(min_value=0.0, max_value=700.0))
@settings(max_examples=200, deadline=None)
def test_log_v1_matches_v1(tau):
    lv = kernel.log_v1(tau)
    assert math.isfinite(lv)
    if tau < 300:
        assert math.exp(lv) == pytest.approx(kernel.v1(tau), rel=1e-12)


@pytest.mark.parametrize("n,ref", sorted(CHAIN_REF.items()))
def test_chain_integral_reference(n, ref):
    assert kernel.chain_integral(n) == pytest.approx(ref, rel=1e-9)


def test_chain_integral_two_dimensional_quadrature():
    from scipy import integrate

    def f(x2, x1):
        return 1.0 / math.sqrt((1 + x1 * x1) * (1 + (x2 - x1) ** 2) * (1 + x2 * x2))

    val, _ = integrate.dblquad(f, -np.inf, np.inf, -np.inf, np.inf, epsabs=1e-11, epsrel=1e-9)
    assert kernel.chain_integral(2) == pytest.approx(val, rel=1e-5)


def test_chain_integral_log_and_range():
    assert kernel.chain_integral(10, log=True) == pytest.approx(math.log(kernel.chain_integral(10)), rel=1e-12)
    with pytest.raises(ValueError):
        kernel.chain_integral(30)
    assert math.isfinite(kernel.chain_integral(200, log=True))
    with pytest.raises(ValueError):
        kernel.chain_integral(0)


def test_chain_bracket_ratio_converges():
    r = [kernel.chain_bracket_ratio(n) for n in range(4, 11)]
    assert max(r) / min(r) < 3
    assert r[-1] == pytest.approx(0.35744, abs=1e-4)


def test_quadrature_config_validation():
    with pytest.raises(ValueError):
        kernel.QuadratureConfig(abs_tol=0.0)
    with pytest.raises(ValueError):
        kernel.QuadratureConfig(max_subdivisions=8)
    with pytest.raises(ValueError):
        kernel.QuadratureConfig(tail_cut=5.0)


def test_remainder_bounds_are_small():
    assert kernel.k0_series_remainder_bound(2.0) < 1e-15
    assert kernel.tail_remainder_bound(2) < 1e-15
