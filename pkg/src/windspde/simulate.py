"""Synthetic datasets drawn from the full model, for recovery tests."""
from __future__ import annotations

import math

import numpy as np
import pandas as pd

from .gmrf import BandedCholesky
from .ingest import PRIME_COLUMNS, STATIONS, derive_columns, jitter
from .latent import LatentModel, ModelData, hyper_to_vector

DEFAULT_ALTITUDES = (10.0, 20.0, 40.0, 60.0, 62.0)


def synthetic_records(n, seed, stations=STATIONS, altitudes=DEFAULT_ALTITUDES,
                      start="2011-01-01", end="2021-01-01", jitter_radius=0.05):
    """Prime-schema records with random sites, times, heights and directions.

    ``wind_speed`` is a placeholder (1.0) to be replaced by a simulated response.
    """
    rng = np.random.default_rng(seed)
    ids = sorted(stations)
    t0 = pd.Timestamp(start).value // 60_000_000_000
    t1 = pd.Timestamp(end).value // 60_000_000_000
    minutes = rng.integers(t0, t1, size=n)
    df = pd.DataFrame({
        "station_ID": np.asarray(ids)[rng.integers(0, len(ids), size=n)],
        "date_time": pd.to_datetime(minutes * 60_000_000_000),
        "altitude": np.asarray(altitudes, dtype=float)[rng.integers(0, len(altitudes), size=n)],
        "wind_speed": np.ones(n),
        "wind_direct_avg": np.round(rng.random(n) * 360.0, 1) % 360.0,
    })
    df = df.sort_values(["station_ID", "date_time", "altitude"], kind="mergesort")
    df = df.reset_index(drop=True)
    ts = pd.Timestamp(start)
    df = derive_columns(df, stations, origin=(ts.year, ts.month))
    return jitter(df, jitter_radius, seed + 1)


def sample_latent(model: LatentModel, theta, rng, beta=None):
    """Latent working vector: given ``beta``, other blocks from their priors."""
    Qw, _ = model.working_prior(theta)
    m = model.n_global
    w = np.zeros(model.n_latent)
    nf = model.n_fixed
    if beta is not None:
        w[:nf] = beta
    if m > nf:
        Qg = Qw[nf:m, nf:m].toarray()
        L = np.linalg.cholesky(Qg)
        w[nf:m] = np.linalg.solve(L.T, rng.standard_normal(m - nf))
    if model.n_spatial:
        fac = BandedCholesky(Qw[m:, m:], perm=model.perm)
        w[m:] = fac.sample(rng)
    return w


def simulate_response(model: LatentModel, theta, seed, beta=None):
    """Draw ``y`` from the model at ``theta``; returns ``(y, w, eta)``."""
    rng = np.random.default_rng(seed)
    if beta is None:
        beta = np.zeros(model.n_fixed)
    w = sample_latent(model, theta, rng, beta)
    eta = model.B @ w
    h = model.hyper_dict(theta)
    if model.spec.family == "weibull":
        alpha = math.exp(h["log_alpha"])
        u = rng.random(len(eta))
        y = np.exp(eta) * (-np.log1p(-u)) ** (1.0 / alpha)
    else:
        sd = math.exp(-0.5 * h["log_prec_obs"])
        y = eta + sd * rng.standard_normal(len(eta))
    return y, w, eta


def simulate_frame(df, model_factory, hyper, seed, beta=None):
    """Fill ``wind_speed`` of ``df`` with a draw from the model.

    ``model_factory(data)`` builds the :class:`LatentModel`; ``hyper`` is a
    :class:`HyperParams`. Returns ``(frame, truth)``.
    """
    data = ModelData.from_frame(df)
    model = model_factory(data)
    theta = hyper_to_vector(hyper, model.names)
    y, w, eta = simulate_response(model, theta, seed, beta)
    out = df.copy()
    out["wind_speed"] = y
    truth = {"theta": dict(zip(model.names, theta.tolist())),
             "beta": [] if beta is None else list(map(float, beta)),
             "latent": (model.basis @ w).tolist() if model.n_latent else []}
    return out[list(PRIME_COLUMNS)], truth
