import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from windspde.priors import (HyperPriors, PcPriorSpec, WeibullParams, ar1_log_prior,
                             kld_by_integration, kld_distance_abs_derivative,
                             pc_matern_log_prior, pc_prec_logpdf, pc_prior_logpdf, rw2_log_prior,
                             weibull_kld, weibull_kld_distance, weibull_logpdf)


def _kld_quadrature(alpha):
    """KL(Weibull(alpha, 1) || Exp(1)) by direct integration of f log(f/g)."""
    def integrand(y):
        lf = math.log(alpha) + (alpha - 1) * math.log(y) - y ** alpha
        return math.exp(lf) * (lf + y)
    a, _ = integrate.quad(integrand, 0, 1, epsabs=1e-14, epsrel=1e-12, limit=400)
    b, _ = integrate.quad(integrand, 1, np.inf, epsabs=1e-14, epsrel=1e-12, limit=400)
    return a + b


def test_weibull_examples():
    assert weibull_logpdf(1.0, 1.0, 1.0) == pytest.approx(-1.0, abs=1e-15)
    assert weibull_logpdf(2.0, 2.0, 1.0) == pytest.approx(math.log(4) - 4, abs=1e-14)
    with pytest.raises(ValueError):
        weibull_logpdf(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        WeibullParams(alpha=-1.0, lam=1.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("lam", [0.5, 1.0, 3.0])
def test_weibull_integrates_to_one(alpha, lam):
    f = lambda y: math.exp(weibull_logpdf(y, alpha, lam))  # noqa: E731
    a, _ = integrate.quad(f, 0, lam, epsabs=1e-13, limit=200)
    b, _ = integrate.quad(f, lam, np.inf, epsabs=1e-13, limit=200)
    assert a + b == pytest.approx(1.0, abs=1e-8)


def test_distance_zero_at_base():
    assert weibull_kld_distance(1.0) == 0.0
    assert all(weibull_kld_distance(a) > 0 for a in (0.5, 2.0, 5.0))


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.9, 0.999, 1.0005, 1.2, 2.0, 3.0, 7.0])
def test_dual_oracle(alpha):
    # closed form, integrated derivative and direct KL quadrature agree
    closed = weibull_kld(alpha)
    assert kld_by_integration(alpha) == pytest.approx(closed, abs=1e-10)
    assert _kld_quadrature(alpha) == pytest.approx(closed, abs=1e-8)
    d_int = math.sqrt(2 * kld_by_integration(alpha))
    assert d_int == pytest.approx(float(weibull_kld_distance(alpha)), abs=1e-5)


def test_distance_at_two_against_quadrature():
    assert float(weibull_kld_distance(2.0)) == pytest.approx(
        math.sqrt(2 * _kld_quadrature(2.0)), abs=1e-6)


def test_distance_monotone_in_log_alpha():
    right = np.exp(np.linspace(1e-4, 3, 400))
    left = np.exp(-np.linspace(1e-4, 3, 400))
    assert np.all(np.diff(weibull_kld_distance(right)) > 0)
    assert np.all(np.diff(weibull_kld_distance(left)) > 0)


def test_distance_continuous_near_one():
    a = np.linspace(0.99, 1.01, 20001)
    d = weibull_kld_distance(a)
    assert np.max(np.abs(np.diff(d))) < 1e-5


@pytest.mark.parametrize("alpha", [0.5, 1.5, 3.0])
def test_derivative_factor_matches_finite_differences(alpha):
    h = 1e-5 * alpha
    fd = (math.sqrt(2 * kld_by_integration(alpha + h))
          - math.sqrt(2 * kld_by_integration(alpha - h))) / (2 * h)
    assert float(kld_distance_abs_derivative(alpha)) == pytest.approx(abs(fd), rel=1e-5)


def test_derivative_continuous_through_one():
    lo = float(kld_distance_abs_derivative(1.0 - 2e-3))
    mid = float(kld_distance_abs_derivative(1.0))
    hi = float(kld_distance_abs_derivative(1.0 + 2e-3))
    assert np.isfinite(mid) and mid > 0
    assert abs(lo - mid) < 1e-2 and abs(hi - mid) < 1e-2


@pytest.mark.parametrize("theta", [2.0, 5.0, 10.0])
def test_pc_prior_integrates_to_one(theta):
    spec = PcPriorSpec(theta)
    f = lambda a: math.exp(pc_prior_logpdf(a, spec))  # noqa: E731
    pts = [0.2, 0.5, 1.0, 2.0, 5.0]
    total = sum(integrate.quad(f, lo, hi, epsabs=1e-12, limit=200)[0]
                for lo, hi in zip([0.0] + pts, pts + [np.inf]))
    assert total == pytest.approx(1.0, abs=1e-3)


def test_pc_prior_mass_increases_with_theta():
    def mass(theta):
        f = lambda a: math.exp(pc_prior_logpdf(a, PcPriorSpec(theta)))  # noqa: E731
        return integrate.quad(f, 0.8, 1.25, points=[1.0])[0]
    m = [mass(t) for t in (2.0, 5.0, 10.0)]
    assert m[0] < m[1] < m[2]


@given(st.floats(1e-3, 50))
def test_pc_prior_nonnegative(alpha):
    v = pc_prior_logpdf(alpha)
    assert v == -math.inf or math.isfinite(v)


def test_pc_prior_invalid():
    with pytest.raises(ValueError):
        PcPriorSpec(0.0)
    with pytest.raises(ValueError):
        pc_prior_logpdf(-1.0)


def test_precision_prior_integrates_to_one():
    f = lambda p: math.exp(pc_prec_logpdf(p, 1.0, 0.01))  # noqa: E731
    total = sum(integrate.quad(f, lo, hi, epsabs=1e-13, limit=400)[0]
                for lo, hi in [(0, 1), (1, 100), (100, 1e4), (1e4, np.inf)])
    assert total == pytest.approx(1.0, abs=1e-4)


def test_ar1_prior():
    hp = HyperPriors()
    assert ar1_log_prior(1.0, 1.0) == -math.inf
    assert ar1_log_prior(-1.2, 1.0) == -math.inf
    assert ar1_log_prior(0.3, -1.0) == -math.inf
    # symmetric in rho, unimodal at 0
    assert ar1_log_prior(0.4, 2.0) == pytest.approx(ar1_log_prior(-0.4, 2.0), abs=1e-14)
    grid = np.linspace(-0.99, 0.99, 199)
    vals = [ar1_log_prior(r, 2.0, hp) for r in grid]
    assert grid[int(np.argmax(vals))] == pytest.approx(0.0, abs=1e-12)
    f = lambda r: math.exp(ar1_log_prior(r, 1.0) - float(pc_prec_logpdf(1.0)))  # noqa: E731
    assert integrate.quad(f, -1, 1)[0] == pytest.approx(1.0, abs=1e-6)


def test_rw2_prior():
    assert rw2_log_prior(0.0) == -math.inf
    assert math.isfinite(rw2_log_prior(3.0))


def test_matern_prior_normalised():
    hp = HyperPriors(range0=1.0, range_p=0.5, sigma0=1.0, sigma_p=0.01)

    def f(log_sd, log_range):
        # (log kappa, log tau) <-> (log range, log sd) has unit Jacobian
        lk = 0.5 * math.log(8.0) - log_range
        lt = -0.5 * math.log(4 * math.pi) - lk - log_sd
        return math.exp(pc_matern_log_prior(lk, lt, hp))
    total, _ = integrate.dblquad(f, -8, 12, -15, 4, epsabs=1e-10)
    assert total == pytest.approx(1.0, abs=1e-4)
