"""Shared model builders and closed-form oracles for the tests."""
import math

import numpy as np

from windspde.latent import LatentModel, ModelData, ModelSpec
from windspde.mesh import triangulate
from windspde.priors import pc_prior_logpdf

NO_EFFECTS = dict(use_spline=False, use_f_month=False, use_c_month=False, use_spatial=False)


def plain_data(y, lon=None, lat=None, f_month=None):
    n = len(y)
    z = np.zeros(n)
    one = np.ones(n, dtype=np.int64)
    return ModelData(np.asarray(y, dtype=float), z, z, z,
                     one if f_month is None else np.asarray(f_month, dtype=np.int64), one,
                     z if lon is None else np.asarray(lon, dtype=float),
                     z if lat is None else np.asarray(lat, dtype=float))


def iid_weibull_model(n=500, alpha=1.5, seed=2024, fixed=("intercept",)):
    y = np.random.default_rng(seed).weibull(alpha, n)
    data = plain_data(y)
    return LatentModel(data, ModelSpec(fixed=fixed, **NO_EFFECTS))


def alpha_posterior_quadrature(y, grid, with_intercept=True, fixed_prec=1e-4):
    """Exact normalised posterior of the shape on ``grid`` (intercept integrated out)."""
    ly = np.log(y)
    bs = np.linspace(-0.6, 0.6, 1201) if with_intercept else np.zeros(1)
    out = []
    for a in grid:
        # log-likelihood for every intercept value at once
        vals = (len(y) * (math.log(a) - a * bs) + (a - 1) * ly.sum()
                - np.exp(-a * bs) * np.exp(a * ly).sum())
        if with_intercept:
            vals = vals - 0.5 * fixed_prec * bs ** 2
            mx = vals.max()
            out.append(pc_prior_logpdf(a) + mx + math.log(np.trapezoid(np.exp(vals - mx), bs)))
        else:
            out.append(pc_prior_logpdf(a) + vals[0])
    lp = np.array(out)
    q = np.exp(lp - lp.max())
    return q / np.trapezoid(q, grid)


def gaussian_toy(n=60, seed=5):
    """Gaussian-likelihood model with intercept, cos term, f_month AR(1) and a small field."""
    rng = np.random.default_rng(seed)
    g = np.linspace(0.0, 1.0, 5)
    mesh = triangulate(np.array([(x, yy) for yy in g for x in g]))
    lon = rng.uniform(0.02, 0.98, n)
    lat = rng.uniform(0.02, 0.98, n)
    fm = rng.integers(1, 13, n)
    data = plain_data(rng.normal(1.0, 1.0, n), lon, lat, fm)
    data = ModelData(data.y, rng.uniform(-1, 1, n), data.sin_direct, data.altitude,
                     data.f_month, data.c_month, lon, lat)
    spec = ModelSpec(fixed=("intercept", "cos_direct"), use_spline=False, use_c_month=False,
                     mesh=mesh, family="gaussian", fixed_prec=0.5)
    return LatentModel(data, spec)


def gaussian_exact(model, theta):
    """Closed-form log marginal likelihood and latent posterior (natural coordinates)."""
    Qw, _ = model.working_prior(theta)
    Qw = Qw.toarray()
    B = model.B.toarray()
    tau = math.exp(model.hyper_dict(theta)["log_prec_obs"])
    y = model.data.y
    n = len(y)
    S = B @ np.linalg.solve(Qw, B.T) + np.eye(n) / tau
    sign, logdet = np.linalg.slogdet(S)
    loglik = -0.5 * (n * math.log(2 * math.pi) + logdet + y @ np.linalg.solve(S, y))
    H = Qw + tau * B.T @ B
    cov_w = np.linalg.inv(H)
    mean_w = cov_w @ (tau * B.T @ y)
    T = model.basis.toarray()
    return loglik, T @ mean_w, T @ cov_w @ T.T
