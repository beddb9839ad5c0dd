"""Weibull likelihood and the prior densities of the model.

The shape prior is the penalised-complexity (PC) prior that shrinks the
Weibull towards its exponential base model (shape 1). The distance is
``d(alpha) = sqrt(2 KLD(alpha))`` where the divergence is taken between a
Weibull with shape ``alpha`` and the exponential with the same scale::

    KLD(alpha) = log(alpha) - gamma_E (alpha - 1) / alpha + Gamma(1 + 1/alpha) - 1

which is scale free. Near ``alpha = 1`` the closed form loses digits to
cancellation, so a Taylor expansion is used there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

EULER = float(np.euler_gamma)

# Taylor coefficients of KLD(1 + e) in powers e**2 .. e**6
_KLD_SERIES = (
    0.91184033042643969479,
    -1.5719242467666323226,
    2.3045007597740917818,
    -3.2335518981335869559,
    4.4606134208459393715,
)
_SERIES_RADIUS = 1e-3


@dataclass(frozen=True)
class WeibullParams:
    alpha: float
    lam: float

    def __post_init__(self):
        if not (self.alpha > 0 and self.lam > 0):
            raise ValueError("Weibull shape and scale must be positive")


@dataclass(frozen=True)
class PcPriorSpec:
    """Rate of the exponential penalty on the distance scale."""
    theta: float = 5.0

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("PC prior rate theta must be positive")


@dataclass(frozen=True)
class HyperPriors:
    """Prior settings for every hyperparameter of the latent model.

    Precisions get PC priors with ``P(sd > prec_u) = prec_a``; AR(1)
    correlations a normal prior on ``atanh(rho)``; the SPDE field the joint
    PC prior on (range, sd) with ``P(range < range0) = range_p`` and
    ``P(sd > sigma0) = sigma_p``.
    """
    alpha: PcPriorSpec = PcPriorSpec()
    prec_u: float = 1.0
    prec_a: float = 0.01
    rho_sd: float = math.sqrt(0.5)
    range0: float = 1.0
    range_p: float = 0.5
    sigma0: float = 1.0
    sigma_p: float = 0.01
    obs_prec_u: float = 1.0
    obs_prec_a: float = 0.01


# ---------------------------------------------------------------------------
# Likelihood
# ---------------------------------------------------------------------------

def weibull_logpdf(y, alpha, lam):
    """Log-density of the Weibull distribution with shape ``alpha`` and scale ``lam``.

    ``f(y) = alpha/lam * (y/lam)**(alpha-1) * exp(-(y/lam)**alpha)`` for ``y > 0``.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("Weibull log-density requires y > 0")
    lam = np.asarray(lam, dtype=float)
    z = np.log(y) - np.log(lam)
    out = np.log(alpha) - np.log(lam) + (alpha - 1.0) * z - np.exp(alpha * z)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# PC prior for the Weibull shape
# ---------------------------------------------------------------------------

def _series(e):
    e = np.clip(e, -_SERIES_RADIUS, _SERIES_RADIUS)
    c2, c3, c4, c5, c6 = _KLD_SERIES
    s = c2 + e * (c3 + e * (c4 + e * (c5 + e * c6)))
    ds = c3 + e * (2 * c4 + e * (3 * c5 + e * 4 * c6))
    return s, ds


def weibull_kld(alpha):
    """KL divergence from Weibull(alpha) to the equal-scale exponential."""
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= 0):
        raise ValueError("alpha must be positive")
    e = a - 1.0
    with np.errstate(over="ignore"):
        closed = (np.log(a) - EULER * e / a + np.exp(special.gammaln(1.0 + 1.0 / a))
                  - 1.0)
    s, _ = _series(e)
    ec = np.clip(e, -_SERIES_RADIUS, _SERIES_RADIUS)
    out = np.where(np.abs(e) < _SERIES_RADIUS, ec * ec * s, closed)
    return out if out.ndim else float(out)


def weibull_kld_derivative(alpha):
    """d KLD / d alpha = 1/a - gamma_E/a**2 - Gamma(1+1/a) psi(1+1/a) / a**2."""
    a = np.asarray(alpha, dtype=float)
    u = 1.0 / a
    with np.errstate(over="ignore", invalid="ignore"):
        closed = (u - EULER * u * u
                  - np.exp(special.gammaln(1.0 + u)) * special.digamma(1.0 + u) * u * u)
    e = a - 1.0
    s, ds = _series(e)
    ec = np.clip(e, -_SERIES_RADIUS, _SERIES_RADIUS)
    near = 2.0 * ec * s + ec * ec * ds
    out = np.where(np.abs(e) < _SERIES_RADIUS, near, closed)
    return out if out.ndim else float(out)


def weibull_kld_distance(alpha):
    """Distance ``d(alpha) = sqrt(2 KLD(alpha))`` from the base model alpha = 1."""
    return np.sqrt(2.0 * np.maximum(weibull_kld(alpha), 0.0))


def kld_distance_abs_derivative(alpha):
    """``|d d(alpha) / d alpha|``, continuous through alpha = 1.

    Away from 1 this is ``0.5 (2 KLD)^{-1/2} |2 dKLD/dalpha|``; near 1 the
    series ``d = |e| sqrt(2 s(e))`` is differentiated directly, which removes
    the 0/0 at ``alpha = 1`` (both one-sided limits equal ``sqrt(2 c2)``).
    """
    a = np.asarray(alpha, dtype=float)
    e = a - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        far = 0.5 * np.abs(2.0 * weibull_kld_derivative(a)) / weibull_kld_distance(a)
    s, ds = _series(e)
    root = np.sqrt(2.0 * s)
    near = np.abs(root + np.clip(e, -_SERIES_RADIUS, _SERIES_RADIUS) * ds / root)
    out = np.where(np.abs(e) < _SERIES_RADIUS, near, far)
    return out if out.ndim else float(out)


def kld_by_integration(alpha):
    """KLD(alpha) recovered by integrating the analytic derivative from 1."""
    val, _ = integrate.quad(weibull_kld_derivative, 1.0, float(alpha),
                            epsabs=1e-14, epsrel=1e-12, limit=200)
    return val


def pc_prior_logpdf(alpha, spec: PcPriorSpec = PcPriorSpec()):
    """Log-density of the PC prior for the Weibull shape.

    ``pi(alpha) = theta/2 * exp(-theta d(alpha)) |d'(alpha)|``. The factor 1/2
    makes the density proper: ``d`` grows without bound on both sides of
    ``alpha = 1``, so each side carries half the mass.
    """
    a = np.asarray(alpha, dtype=float)
    if np.any(a <= 0):
        raise ValueError("alpha must be positive")
    d = weibull_kld_distance(a)
    with np.errstate(divide="ignore"):
        out = (math.log(spec.theta / 2.0) - spec.theta * d
               + np.log(kld_distance_abs_derivative(a)))
    out = np.where(np.isfinite(out), out, -np.inf)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Hyperpriors of the latent model
# ---------------------------------------------------------------------------

def pc_prec_logpdf(prec, u=1.0, a=0.01):
    """PC prior for a Gaussian precision: exponential on ``sd = prec**-0.5``.

    ``P(sd > u) = a``; density ``lam/2 prec^{-3/2} exp(-lam prec^{-1/2})``.
    """
    prec = np.asarray(prec, dtype=float)
    lam = -math.log(a) / u
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(lam / 2.0) - 1.5 * np.log(prec) - lam / np.sqrt(prec)
    out = np.where(prec > 0, out, -np.inf)
    return out if out.ndim else float(out)


def ar1_log_prior(rho, precision, hyper_spec: HyperPriors = HyperPriors()):
    """Joint log-density of an AR(1) correlation and marginal precision.

    ``atanh(rho) ~ N(0, rho_sd**2)`` (symmetric, unimodal at 0 for
    ``rho_sd**2 <= 1/2``) and the PC prior on the precision. Out-of-support
    arguments give ``-inf``.
    """
    rho = float(rho)
    if not (abs(rho) < 1.0 and precision > 0):
        return -math.inf
    z = math.atanh(rho)
    s = hyper_spec.rho_sd
    log_rho = (-0.5 * (z / s) ** 2 - math.log(s * math.sqrt(2 * math.pi))
               - math.log1p(-rho * rho))
    return log_rho + float(pc_prec_logpdf(precision, hyper_spec.prec_u, hyper_spec.prec_a))


def rw2_log_prior(precision, hyper_spec: HyperPriors = HyperPriors()):
    if not precision > 0:
        return -math.inf
    return float(pc_prec_logpdf(precision, hyper_spec.prec_u, hyper_spec.prec_a))


def pc_matern_log_prior(log_kappa, log_tau, hyper_spec: HyperPriors = HyperPriors()):
    """Joint PC prior for a 2-D, nu = 1 SPDE field, on the (log kappa, log tau) scale.

    range = sqrt(8)/kappa, sd**2 = 1/(4 pi kappa**2 tau**2). The map from
    (log kappa, log tau) to (log range, log sd) has unit Jacobian.
    """
    log_range = 0.5 * math.log(8.0) - log_kappa
    log_sd = -0.5 * math.log(4.0 * math.pi) - log_kappa - log_tau
    lam_r = -math.log(hyper_spec.range_p) * hyper_spec.range0
    lam_s = -math.log(hyper_spec.sigma_p) / hyper_spec.sigma0
    rng = math.exp(log_range)
    sd = math.exp(log_sd)
    # pi(range) = lam_r range^-2 exp(-lam_r/range); pi(sd) = lam_s exp(-lam_s sd)
    lp_range = math.log(lam_r) - 2.0 * log_range - lam_r / rng + log_range
    lp_sd = math.log(lam_s) - lam_s * sd + log_sd
    return lp_range + lp_sd
