from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from diffmean import kernel, simplex
from diffmean.simplex import ChainPoint, McmcConfig, SimplexPoint

J_REF = {1: math.pi, 2: 277.477994600510197, 3: 65973.8419329231990}


def test_simplex_point_accessors():
    p = SimplexPoint.from_x([0.2, 0.5, 0.9])
    assert p.n == 4
    assert np.allclose(p.gaps, [0.2, 0.3, 0.4, 0.1])
    assert p.x_at(0) == 0.0 and p.x_at(4) == 1.0
    assert p.x_at(-1) == pytest.approx(0.9 - 1)
    assert p.wrap_gap == pytest.approx(p.gaps[-1])
    assert np.all(p.v_arguments() >= 1.0)
    with pytest.raises(ValueError):
        SimplexPoint.from_x([0.5, 0.2])
    with pytest.raises(ValueError):
        SimplexPoint(np.log([0.5, 0.6]))


def test_u1n_small_cases():
    assert simplex.u1n(SimplexPoint(np.zeros(1))) == pytest.approx(math.pi)
    a = simplex.u1n(SimplexPoint.from_x([0.3]))
    b = simplex.u1n(SimplexPoint.from_x([0.7]))
    assert a == pytest.approx(b, rel=1e-10)
    ref = kernel.v(1 / (2 * math.sqrt(0.21))) ** 2 / 0.21
    assert a == pytest.approx(ref, rel=1e-12)
    u = SimplexPoint.uniform(5)
    assert np.allclose(u.v_arguments(), 1.0)
    assert simplex.u1n(u) == pytest.approx(5 ** 5 * math.pi ** 5, rel=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_jn_reference_and_bruteforce(n):
    assert simplex.jn(n) == pytest.approx(J_REF[n], rel=1e-9)
    assert simplex.jn(n, method="bruteforce") == pytest.approx(J_REF[n], rel=1e-4)


def test_jn_method_guards():
    with pytest.raises(ValueError):
        simplex.jn(4, method="bruteforce")
    with pytest.raises(ValueError):
        simplex.jn(2, method="nope")


def test_jn_bracket_and_log_convexity():
    r = [simplex.jn_bracket_ratio(n) for n in range(2, 9)]
    assert max(r) / min(r) < 3
    lj = [simplex.jn(n, log=True) for n in range(1, 9)]
    assert all(np.diff(lj, 2) > 0)


def test_chain_roundtrip():
    r = np.random.default_rng(0)
    c = ChainPoint(r.standard_normal(7) * 3)
    p = c.to_simplex()
    back = ChainPoint.from_simplex(p, odd=c.t[0::2])
    assert np.allclose(back.t[1::2], c.t[1::2], atol=1e-12)
    assert math.isfinite(c.log_density())


def test_pair_sums_match_log_gap_ratios():
    r = np.random.default_rng(1)
    inc = r.standard_cauchy((50, 8))
    inc[:, -1] = -inc[:, :-1].sum(axis=1)  # closes the chain: t_{2n} = 0
    lg = simplex.increments_to_log_gaps(inc)
    hr = simplex.half_log_ratios(lg)
    ps = simplex.pair_sums(inc)
    ok = np.abs(lg).max(axis=1) < 30
    assert np.allclose(ps[ok], hr[ok], atol=1e-9)


def test_log_gaps_normalized_at_extreme_scale():
    inc = np.array([[1e12, -3e11, 5e10, 1e12, -2e12, 7.0, 1e11, 3.0]])
    lg = simplex.increments_to_log_gaps(inc)
    SimplexPoint(lg[0])


def test_mcmc_config_validation():
    with pytest.raises(ValueError):
        McmcConfig(burn_in=10)
    with pytest.raises(ValueError):
        McmcConfig(thinning=0)
    with pytest.raises(ValueError):
        McmcConfig(proposal_scale=0)
    assert McmcConfig().thinning_for(5) == 9


def test_sampler_deterministic_and_diagnostics():
    a = simplex.sample_un(3, 200, McmcConfig(burn_in=1000, chain_count=4), 5)
    b = simplex.sample_un(3, 200, McmcConfig(burn_in=1000, chain_count=4), 5)
    assert np.array_equal(a.log_gaps, b.log_gaps)
    assert len(a) == 200
    assert 0 < a.site_acceptance <= 1 and 0 < a.scale_acceptance <= 1
    for p in a.points():
        assert np.all(p.v_arguments() >= 1.0)
        assert math.isfinite(simplex.u1n(p, log=True))
    assert a.to_csv().splitlines()[0] == "n,x1,x2"
    with pytest.raises(ValueError):
        simplex.sample_un(1, 10)


@pytest.mark.slow
def test_u2_symmetry_and_ks():
    smp = simplex.sample_un(2, 30_000, McmcConfig(chain_count=100), 3)
    x1 = np.exp(smp.log_gaps[:, 0])
    est = smp.estimate(x1)
    assert abs(est.value - 0.5) < 3 * est.std_error
    # KS is invariant under monotone maps; the logit is exact where x_1 would
    # round to 0 or 1
    logit = smp.log_gaps[:, 0] - smp.log_gaps[:, 1]
    ks = stats.kstest(logit, simplex.u2_logit_cdf).statistic
    assert ks < 0.02
    assert smp.ess(x1) >= 1e4


def test_u2_cdf_oracle():
    assert simplex.u2_cdf(np.array([0.5]))[0] == pytest.approx(0.5, abs=1e-9)
    x = np.array([0.1, 0.3])
    assert np.allclose(simplex.u2_cdf(x) + simplex.u2_cdf(1 - x), 1.0, atol=1e-9)


def test_jn_monte_carlo_n2():
    est = simplex.jn_monte_carlo(2, 400_000, 1)
    assert abs(est.value - J_REF[2]) < 4 * est.std_error


def test_tail_statistics_limits():
    smp = simplex.sample_un(4, 500, McmcConfig(burn_in=1000, chain_count=4), 2)
    near = simplex.tail_statistics(smp, 0.999999, 1.0 + 1e-12)
    assert near.spacing_mass.value < 1.0
    assert near.ratio_mass.value == 0.0
    with pytest.raises(ValueError):
        simplex.tail_statistics(smp, 1.5, 2.0)
    with pytest.raises(ValueError):
        simplex.tail_statistics(smp, 0.5, 1.0)


def test_c3_scan_equality_configuration_and_probe():
    assert simplex.c3_ratio(0.3, 0.3, 0.3) == pytest.approx(math.pi, rel=1e-12)
    s50 = simplex.c3_scan(0.1, 50)
    assert math.isfinite(s50) and s50 >= math.pi
    s100 = simplex.c3_scan(0.1, 100)
    assert s100 / s50 < 1.1
    pr = simplex.c3_probe(0.1, 1.05 * s100, 100_000, 0)
    assert pr.violations == 0


@given(st.floats(1e-6, 1.0), st.floats(1e-9, 0.5), st.floats(1e-9, 0.5))
@settings(max_examples=100, deadline=None)
def test_c3_ratio_positive(a, y1, y2):
    assert simplex.c3_ratio(a, y1, y2) > 0
