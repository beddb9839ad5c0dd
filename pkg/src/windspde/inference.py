"""Nested Laplace approximation for the latent Gaussian model.

For fixed hyperparameters ``theta`` the latent posterior is approximated
by a Gaussian at its mode (Newton iterations on the log joint). The
hyperparameter posterior is then the Laplace approximation

    log pi(theta | y) = log pi(y | w*, theta) + log pi(w* | theta)
                        + log pi(theta) - log pi_G(w* | theta, y)

which is exact when the likelihood is Gaussian. The outer step finds the
mode of this surface, standardises it with the negative Hessian and
evaluates a central composite design (or a full grid for one or two
hyperparameters) around it. Latent marginals are Gaussian mixtures over
the design points.
"""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, product

import numpy as np
import scipy.sparse as sp
from scipy import optimize
from scipy.interpolate import CubicSpline
from scipy.signal import fftconvolve

from .errors import ConvergenceError, NumericalError
from .gmrf import ArrowCholesky
from .latent import LatentModel, LatentState, natural_name, natural_value

log = logging.getLogger(__name__)

CCD_F0 = 1.1
GRID_STEP = 0.75
GRID_DIFF_LOGDENS = 6.0
FD_STEP_GRAD = 1e-3
FD_STEP_HESS = 1e-2


# ---------------------------------------------------------------------------
# inner step
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class GaussianApprox:
    mode: np.ndarray
    precision_at_mode: sp.csr_matrix
    factor: ArrowCholesky
    log_det_half: float
    converged: bool
    iterations: int
    loglik: float
    prior_quad: float
    grad_norm: float


def log_joint(w, theta, model: LatentModel, Qw=None):
    """Log joint (without constants), its gradient and Hessian in ``w``.

    Returns ``(value, grad, H)`` with ``H`` the negative Hessian
    ``Q + B' diag(curv) B``.
    """
    w = np.asarray(w, dtype=float)
    if Qw is None:
        Qw, _ = model.working_prior(theta)
    eta = model.B @ w
    ll, g, c = model.loglik_terms(eta, theta)
    Qx = Qw @ w
    value = ll - 0.5 * float(w @ Qx)
    grad = model.B.T @ g - Qx
    H = _hessian(model, Qw, c)
    return value, grad, H


def _hessian(model, Qw, curv):
    B = model.B
    if B.shape[0] == 0:
        return Qw.tocsr()
    DB = sp.diags(curv) @ B
    return (Qw + B.T @ DB).tocsr()


def gaussian_approx(theta, model: LatentModel, tol=1e-8, max_iter=50, w0=None,
                    prior=None) -> GaussianApprox:
    """Newton iterations with backtracking line search for the latent mode."""
    Qw, _ = prior if prior is not None else model.working_prior(theta)
    n = model.n_latent
    w = np.zeros(n) if w0 is None else np.array(w0, dtype=float)
    B = model.B
    m = model.n_global
    converged = False
    it = 0
    gnorm = math.inf
    while True:
        eta = B @ w
        ll, g, c = model.loglik_terms(eta, theta)
        Bg = B.T @ g
        Qx = Qw @ w
        grad = Bg - Qx
        gnorm = float(np.linalg.norm(grad))
        scale = max(1.0, float(np.linalg.norm(Bg)), float(np.linalg.norm(Qx)))
        H = _hessian(model, Qw, c)
        factor = ArrowCholesky(H, m, perm=model.perm)
        if gnorm <= tol * scale:
            converged = True
            break
        if it >= max_iter:
            break
        step = factor.solve(grad)
        f0 = ll - 0.5 * float(w @ Qx)
        slope = float(grad @ step)
        t = 1.0
        if slope <= 1e-10 * (1.0 + abs(f0)):
            # predicted gain below the resolution of f: take the Newton step
            w = w + step
            it += 1
            continue
        while True:
            wn = w + t * step
            try:
                lln, _, _ = model.loglik_terms(B @ wn, theta)
                fn = lln - 0.5 * float(wn @ (Qw @ wn))
            except NumericalError:
                fn = -math.inf
            if fn >= f0 + 1e-4 * t * slope or t < 1e-10:
                break
            t *= 0.5
        it += 1
        if not fn > -math.inf:
            break
        if fn < f0 and t < 1e-10:
            # no ascent possible at working precision
            converged = gnorm <= 1e3 * tol * scale
            break
        w = wn
    eta = B @ w
    ll, _, _ = model.loglik_terms(eta, theta)
    return GaussianApprox(mode=w, precision_at_mode=H, factor=factor,
                          log_det_half=0.5 * factor.logdet, converged=converged,
                          iterations=it, loglik=ll, prior_quad=float(w @ (Qw @ w)),
                          grad_norm=gnorm)


def log_posterior_hyper(theta, model: LatentModel, tol=1e-8, max_iter=50, w0=None,
                        return_approx=False):
    """Laplace approximation to the unnormalised log posterior of ``theta``."""
    theta = np.asarray(theta, dtype=float)
    prior = model.working_prior(theta)
    ga = gaussian_approx(theta, model, tol=tol, max_iter=max_iter, w0=w0, prior=prior)
    if not ga.converged:
        raise ConvergenceError(
            "inner Newton iterations did not converge",
            {"iterations": ga.iterations, "grad_norm": ga.grad_norm,
             "theta": theta.tolist()})
    lp = (ga.loglik - 0.5 * ga.prior_quad + 0.5 * prior[1] - ga.log_det_half
          + model.log_hyper_prior(theta))
    if return_approx:
        return lp, ga
    return lp


# ---------------------------------------------------------------------------
# designs
# ---------------------------------------------------------------------------

def _resolution_v_generators(m):
    """Columns of a two-level resolution-V design in GF(2)^k, smallest k found."""
    k = 1
    while True:
        chosen = []
        sums = {0}
        for v in range(1, 2 ** k):
            if v in sums:
                continue
            # v must not equal any XOR of <= 3 chosen columns
            ok = True
            for r in (1, 2, 3):
                for sub in combinations(chosen, r):
                    x = 0
                    for s in sub:
                        x ^= s
                    if x == v:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                chosen.append(v)
                if len(chosen) == m:
                    return k, chosen
        k += 1


def ccd_design(m, f0=CCD_F0):
    """Central composite design on the sphere of radius ``f0 sqrt(m)``.

    Returns points ``z`` (first row the centre) and their integration
    weights, exact for constants and second moments of N(0, I).
    """
    if m == 0:
        return np.zeros((1, 0)), np.ones(1)
    if m <= 4:
        corners = np.array(list(product((-1.0, 1.0), repeat=m)))
    else:
        k, cols = _resolution_v_generators(m)
        runs = np.arange(2 ** k)
        bits = np.array([[bin(u & v).count("1") % 2 for v in cols] for u in runs])
        corners = 1.0 - 2.0 * bits
    axial = np.concatenate([np.eye(m), -np.eye(m)]) * math.sqrt(m)
    pts = np.unique(np.concatenate([corners, axial]), axis=0) * f0
    n_s = len(pts)
    z = np.concatenate([np.zeros((1, m)), pts])
    c = np.concatenate([[1.0 - 1.0 / f0 ** 2], np.full(n_s, 1.0 / (n_s * f0 ** 2))])
    return z, c


# ---------------------------------------------------------------------------
# posterior container
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PosteriorResult:
    names: tuple
    free: tuple
    theta_mode: np.ndarray
    hessian: np.ndarray
    z: np.ndarray
    thetas: np.ndarray
    log_post: np.ndarray
    weights: np.ndarray
    hyper_marginals: dict
    latent_mean: LatentState
    latent_sd: LatentState
    spatial_edges: np.ndarray
    spatial_edge_cov: np.ndarray
    spatial_var: np.ndarray
    strategy: str
    estimates: dict
    diagnostics: dict = field(default_factory=dict)

    def natural_marginal(self, name):
        """Marginal on the reporting scale: (values, density)."""
        x, d = self.hyper_marginals[name]
        v = np.array([natural_value(name, t) for t in x])
        if name.startswith("log_"):
            jac = v
        elif name.startswith("atanh_"):
            jac = 1.0 - v * v
        else:
            jac = np.ones_like(v)
        return v, d / jac


def _evaluate(model, theta, tol, w0):
    try:
        lp, ga = log_posterior_hyper(theta, model, tol=tol, w0=w0, return_approx=True)
    except (ConvergenceError, NumericalError) as exc:
        return {"theta": theta, "ok": False, "error": str(exc)}
    return {"theta": theta, "ok": True, "lp": lp, "ga": ga}


class _Objective:
    """Log posterior on the free coordinates, warm-started from the last mode."""

    def __init__(self, model, full0, free, tol):
        self.model = model
        self.full0 = np.array(full0, dtype=float)
        self.free = list(free)
        self.tol = tol
        self.w = None
        self.n_evals = 0
        self.best = (-math.inf, None)

    def full(self, t):
        th = self.full0.copy()
        th[self.free] = t
        return th

    def lp(self, t):
        self.n_evals += 1
        th = self.full(t)
        try:
            lp, ga = log_posterior_hyper(th, self.model, tol=self.tol, w0=self.w,
                                         return_approx=True)
        except (ConvergenceError, NumericalError):
            return -math.inf
        if not math.isfinite(lp):
            return -math.inf
        if lp > self.best[0]:
            self.best = (lp, np.array(t, dtype=float))
            self.w = ga.mode
        return lp

    def neg(self, t):
        v = self.lp(t)
        return -v if math.isfinite(v) else 1e300

    def grad(self, t, h=FD_STEP_GRAD):
        g = np.zeros(len(t))
        for i in range(len(t)):
            e = np.zeros(len(t))
            e[i] = h
            g[i] = (self.neg(t + e) - self.neg(t - e)) / (2 * h)
        return g


def hessian_fd(fun, x, h=FD_STEP_HESS):
    """Central finite-difference Hessian of a scalar function."""
    m = len(x)
    f0 = fun(x)
    Hm = np.zeros((m, m))
    for i in range(m):
        e = np.zeros(m)
        e[i] = h
        Hm[i, i] = (fun(x + e) - 2 * f0 + fun(x - e)) / (h * h)
    for i in range(m):
        for j in range(i + 1, m):
            ei = np.zeros(m)
            ej = np.zeros(m)
            ei[i] = h
            ej[j] = h
            v = (fun(x + ei + ej) - fun(x + ei - ej) - fun(x - ei + ej)
                 + fun(x - ei - ej)) / (4 * h * h)
            Hm[i, j] = Hm[j, i] = v
    return Hm


def find_mode(model: LatentModel, theta0=None, fixed=None, tol=1e-8, outer_tol=1e-5,
              max_outer=200):
    """Mode of the Laplace log posterior over the free hyperparameters."""
    names = model.names
    full0 = model.initial_theta() if theta0 is None else np.array(theta0, dtype=float)
    fixed = dict(fixed or {})
    for k, v in fixed.items():
        full0[names.index(k)] = v
    free = [i for i, nm in enumerate(names) if nm not in fixed]
    obj = _Objective(model, full0, free, tol)
    x0 = full0[free]
    if not math.isfinite(obj.lp(x0)):
        raise ConvergenceError("log posterior is not finite at the starting point",
                               {"theta": full0.tolist()})
    if free:
        res = optimize.minimize(obj.neg, x0, jac=obj.grad, method="BFGS",
                                options={"gtol": outer_tol, "maxiter": max_outer})
        x = obj.best[1] if obj.best[1] is not None else res.x
        # Newton polish on the finite-difference Hessian
        Hn = -hessian_fd(obj.lp, x)
        g = -obj.grad(x)
        try:
            L = np.linalg.cholesky(Hn)
            step = np.linalg.solve(L.T, np.linalg.solve(L, g))
            if np.all(np.isfinite(step)) and np.linalg.norm(step) < 1.0:
                obj.lp(x + step)
        except np.linalg.LinAlgError:
            pass
        x = obj.best[1]
    else:
        x = x0
    return obj.full(x), obj, free


def _marginal_grid_1d(zs, lps, M, center, npts=401):
    order = np.argsort(zs)
    zs, lps = zs[order], lps[order]
    spline = CubicSpline(zs, lps - lps.max())
    zf = np.linspace(zs[0], zs[-1], npts)
    dens = np.exp(spline(zf))
    x = center + M * zf
    if M < 0:
        x, dens = x[::-1], dens[::-1]
    dens = dens / np.trapezoid(dens, x)
    return x, dens


def _split_normal_marginal(center, Mrow, s_plus, s_minus, npts=801):
    """Density of ``center + sum_k Mrow[k] z_k`` for independent split normals."""
    scale_p = np.where(Mrow >= 0, np.abs(Mrow) * s_plus, np.abs(Mrow) * s_minus)
    scale_m = np.where(Mrow >= 0, np.abs(Mrow) * s_minus, np.abs(Mrow) * s_plus)
    width = 7.0 * math.sqrt(float(np.sum(np.maximum(scale_p, scale_m) ** 2)))
    if width <= 0:
        width = 1e-8
    grid = np.linspace(-width, width, npts)
    dx = grid[1] - grid[0]
    dens = None
    for sp_, sm_ in zip(scale_p, scale_m):
        if max(sp_, sm_) < 0.5 * dx:
            continue
        comp = np.where(grid >= 0, np.exp(-0.5 * (grid / max(sp_, 1e-300)) ** 2),
                        np.exp(-0.5 * (grid / max(sm_, 1e-300)) ** 2))
        comp /= comp.sum()
        dens = comp if dens is None else fftconvolve(dens, comp, mode="same")
    if dens is None:
        dens = np.exp(-0.5 * (grid / dx) ** 2)
    dens = np.maximum(dens, 0.0)
    x = center + grid
    dens = dens / np.trapezoid(dens, x)
    return x, dens


def _kernel_marginal(values, weights, bw, npts=401):
    lo = values.min() - 5 * bw
    hi = values.max() + 5 * bw
    x = np.linspace(lo, hi, npts)
    d = np.zeros(npts)
    for v, w in zip(values, weights):
        d += w * np.exp(-0.5 * ((x - v) / bw) ** 2)
    d /= np.trapezoid(d, x)
    return x, d


def explore(model: LatentModel, strategy="ccd", fixed=None, theta0=None, tol=1e-8,
            outer_tol=1e-5, threads=1, f0=CCD_F0, grid_step=GRID_STEP,
            diff_logdens=GRID_DIFF_LOGDENS) -> PosteriorResult:
    """Explore the hyperparameter posterior and mix the latent Gaussians."""
    if strategy not in ("ccd", "grid"):
        raise ValueError(f"unknown strategy {strategy!r}; use 'ccd' or 'grid'")
    cpu0 = time.process_time()
    names = model.names
    mode, obj, free = find_mode(model, theta0=theta0, fixed=fixed, tol=tol,
                                outer_tol=outer_tol)
    cpu_mode = time.process_time() - cpu0
    m = len(free)
    if m:
        Hn = -hessian_fd(obj.lp, mode[free])
        Hn = 0.5 * (Hn + Hn.T)
        lam, V = np.linalg.eigh(Hn)
        floor = max(1e-8 * float(np.abs(lam).max()), 1e-8)
        lam = np.maximum(lam, floor)
        M = V / np.sqrt(lam)[None, :]
        cov_free = (V / lam[None, :]) @ V.T
    else:
        M = np.zeros((0, 0))
        cov_free = np.zeros((0, 0))
    w_mode = obj.w

    def theta_of(z):
        th = mode.copy()
        if m:
            th[free] = mode[free] + M @ z
        return th

    def run(points):
        thetas = [theta_of(z) for z in points]
        if threads > 1 and len(thetas) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                return list(ex.map(lambda t: _evaluate(model, t, tol, w_mode), thetas))
        return [_evaluate(model, t, tol, w_mode) for t in thetas]

    if strategy == "grid" or m == 0:
        if m > 2:
            raise ValueError("grid strategy supports at most 2 free hyperparameters")
        zs, evals = _grid_points(run, m, grid_step, diff_logdens)
        cweights = np.ones(len(zs))
    else:
        zs, cweights = ccd_design(m, f0)
        evals = run(zs)
    ok = [i for i, e in enumerate(evals) if e["ok"]]
    if m > 0 and len(ok) < 3:
        raise ConvergenceError(f"only {len(ok)} design point(s) converged",
                               {"errors": [e.get("error") for e in evals if not e["ok"]]})
    if not ok:
        raise ConvergenceError("the mode could not be evaluated",
                               {"errors": [e.get("error") for e in evals]})
    zs = zs[ok]
    cweights = cweights[ok]
    evals = [evals[i] for i in ok]
    lps = np.array([e["lp"] for e in evals])
    thetas = np.array([e["theta"] for e in evals])
    lp0 = lps.max()
    if strategy == "ccd" and m:
        logw = np.log(np.maximum(cweights, 1e-300)) + lps - lps[0] \
            + 0.5 * np.sum(zs ** 2, axis=1)
        logw = np.where(cweights > 0, logw, -np.inf)
    else:
        logw = lps - lp0
    weights = np.exp(logw - logw.max())
    weights = weights / weights.sum()

    marg = {}
    for j, i in enumerate(free):
        nm = names[i]
        if strategy == "grid" and m == 1:
            marg[nm] = _marginal_grid_1d(zs[:, 0], lps, M[0, 0], mode[i])
        elif strategy == "grid":
            bw = grid_step * float(np.linalg.norm(M[j])) / math.sqrt(2.0)
            marg[nm] = _kernel_marginal(thetas[:, i], weights, bw)
        else:
            s_plus, s_minus = _axis_scales(zs, lps, m, f0)
            marg[nm] = _split_normal_marginal(mode[i], M[j], s_plus, s_minus)
    for i, nm in enumerate(names):
        if i not in free:
            marg[nm] = (np.array([mode[i]]), np.array([1.0]))

    mean, sd, edges, ecov, svar = _mix_latent(model, evals, weights)
    estimates = _point_estimates(names, thetas, weights)
    cpu_total = time.process_time() - cpu0
    diag = {"n_lp_evals": obj.n_evals + len(zs), "n_design": len(zs),
            "mode_cpu_seconds": cpu_mode, "cpu_seconds": cpu_total,
            "inner_iterations": [int(e["ga"].iterations) for e in evals],
            "theta_mode": dict(zip(names, mode.tolist()))}
    full_hess = np.full((len(names), len(names)), np.nan)
    if m:
        full_hess[np.ix_(free, free)] = cov_free
    return PosteriorResult(names=tuple(names), free=tuple(names[i] for i in free),
                           theta_mode=mode, hessian=full_hess, z=zs, thetas=thetas,
                           log_post=lps, weights=weights, hyper_marginals=marg,
                           latent_mean=mean, latent_sd=sd, spatial_edges=edges,
                           spatial_edge_cov=ecov, spatial_var=svar, strategy=strategy,
                           estimates=estimates, diagnostics=diag)


def _grid_points(run, m, step, diff):
    if m == 0:
        z = np.zeros((1, 0))
        return z, run(z)
    center = run(np.zeros((1, m)))
    if not center[0]["ok"]:
        raise ConvergenceError("mode evaluation failed", {"error": center[0]["error"]})
    lp0 = center[0]["lp"]
    extents = []
    for k in range(m):
        ext = []
        for sign in (1, -1):
            i = 1
            while i <= 40:
                z = np.zeros((1, m))
                z[0, k] = sign * i * step
                e = run(z)[0]
                if not e["ok"] or lp0 - e["lp"] > diff:
                    break
                i += 1
            ext.append(i)
        extents.append(range(-ext[1], ext[0] + 1))
    pts = np.array(list(product(*extents)), dtype=float) * step
    evals = run(pts)
    keep = [i for i, e in enumerate(evals)
            if not e["ok"] or lp0 - e["lp"] <= diff + 1e-12]
    lps_ok = [evals[i]["lp"] for i in keep if evals[i]["ok"]]
    if lps_ok and max(lps_ok) > lp0:
        lp0 = max(lps_ok)
    return pts[keep], [evals[i] for i in keep]


def _axis_scales(zs, lps, m, f0):
    r = f0 * math.sqrt(m)
    lp0 = lps[0]
    s_plus = np.ones(m)
    s_minus = np.ones(m)
    for k in range(m):
        for sign, arr in ((1, s_plus), (-1, s_minus)):
            target = np.zeros(m)
            target[k] = sign * r
            hit = np.nonzero(np.all(np.abs(zs - target) < 1e-9, axis=1))[0]
            if hit.size:
                drop = lp0 - lps[hit[0]]
                if drop > 1e-8:
                    arr[k] = float(np.clip(r / math.sqrt(2.0 * drop), 0.2, 5.0))
    return s_plus, s_minus


def _latent_moments(model, ga):
    """Natural-coordinate means, variances and spatial edge covariances."""
    F = ga.factor
    w = ga.mode
    mean = model.basis @ w if model.n_latent else np.zeros(0)
    m = model.n_global
    var = np.zeros(len(mean))
    edges = np.zeros((0, 2), dtype=np.int64)
    ecov = np.zeros(0)
    svar = np.zeros(0)
    if m:
        Tg = model.basis[:mean.shape[0] - model.n_spatial, :m]
        Sg = F.global_covariance()
        var[:Tg.shape[0]] = np.einsum("ij,jk,ik->i", Tg.toarray(), Sg, Tg.toarray())
    if model.n_spatial:
        n = model.n_spatial
        idx = np.arange(n)
        svar = F.spatial_covariance_entries(idx, idx)
        var[len(mean) - n:] = svar
        edges = model.spec.mesh.edges()
        ecov = F.spatial_covariance_entries(edges[:, 0], edges[:, 1])
    return mean, var, edges, ecov, svar


def _mix_latent(model, evals, weights):
    n = model.basis.shape[0] if model.n_latent else 0
    m1 = np.zeros(n)
    m2 = np.zeros(n)
    edges = np.zeros((0, 2), dtype=np.int64)
    e2 = None
    s2 = None
    for e, wt in zip(evals, weights):
        mean, var, edges, ecov, svar = _latent_moments(model, e["ga"])
        m1 += wt * mean
        m2 += wt * (var + mean * mean)
        if model.n_spatial:
            ms = mean[n - model.n_spatial:]
            term = ecov + ms[edges[:, 0]] * ms[edges[:, 1]]
            e2 = wt * term if e2 is None else e2 + wt * term
            sv = svar + ms * ms
            s2 = wt * sv if s2 is None else s2 + wt * sv
    var = np.maximum(m2 - m1 * m1, 0.0)
    if model.n_spatial:
        ms = m1[n - model.n_spatial:]
        ecov = e2 - ms[edges[:, 0]] * ms[edges[:, 1]]
        svar = np.maximum(s2 - ms * ms, 0.0)
    else:
        ecov = np.zeros(0)
        svar = np.zeros(0)
    return (model.split_natural(m1), model.split_natural(np.sqrt(var)), edges, ecov, svar)


def _point_estimates(names, thetas, weights):
    """Posterior means (over design weights) of the reported quantities."""
    out = {}
    cols = {nm: thetas[:, i] for i, nm in enumerate(names)}

    def wmean(v):
        return float(np.dot(weights, v))

    for nm, col in cols.items():
        nat = np.array([natural_value(nm, t) for t in col])
        out[natural_name(nm)] = wmean(nat)
        out[natural_name(nm) + "_sd"] = math.sqrt(max(wmean(nat * nat) - wmean(nat) ** 2, 0.0))
        out[nm] = wmean(col)
        out[nm + "_sd"] = math.sqrt(max(wmean(col * col) - wmean(col) ** 2, 0.0))
    if "log_prec_obs" in cols:
        out["sigma2_e"] = wmean(np.exp(-cols["log_prec_obs"]))
    else:
        out["sigma2_e"] = float("nan")
    if "log_kappa" in cols:
        k = np.exp(cols["log_kappa"])
        t = np.exp(cols["log_tau"])
        out["sigma2_x"] = wmean(1.0 / (4 * math.pi * k * k * t * t))
        out["nominal_range"] = wmean(math.sqrt(8.0) / k)
    else:
        for key in ("sigma2_x", "nominal_range", "kappa", "tau"):
            out.setdefault(key, float("nan"))
    return out


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

FIELD_SUMMARY = ("sigma2_e", "sigma2_x", "kappa", "nominal_range", "tau")


def fit_report(result: PosteriorResult, mesh=None, cpu_seconds=None):
    """One summary row: field quantities, shape, vertex count and CPU time."""
    est = result.estimates
    row = {k: est.get(k, float("nan")) for k in FIELD_SUMMARY}
    row["alpha"] = est.get("alpha", float("nan"))
    row["n_vertices"] = mesh.n_vertices if mesh is not None else 0
    row["cpu_seconds"] = (result.diagnostics.get("cpu_seconds", float("nan"))
                          if cpu_seconds is None else cpu_seconds)
    return row


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_hyper_marginals(result: PosteriorResult, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["parameter", "value", "density"])
        for nm in result.names:
            v, d = result.natural_marginal(nm)
            order = np.argsort(v)
            for a, b in zip(v[order], d[order]):
                wr.writerow([natural_name(nm), _fmt(a), _fmt(b)])


def write_latent_summary(result: PosteriorResult, path):
    blocks = ("beta", "spline", "f_month_effect", "c_month_effect", "spatial")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["block", "index", "mean", "sd"])
        for b in blocks:
            mu = getattr(result.latent_mean, b)
            sd = getattr(result.latent_sd, b)
            for k, (a, s) in enumerate(zip(mu, sd)):
                wr.writerow([b, k, _fmt(a), _fmt(s)])


def write_design(result: PosteriorResult, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(result.names) + ["log_post", "weight"])
        for th, lp, w in zip(result.thetas, result.log_post, result.weights):
            wr.writerow([_fmt(t) for t in th] + [_fmt(lp), _fmt(w)])


def write_estimates(result: PosteriorResult, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["quantity", "posterior_mean"])
        keys = list(FIELD_SUMMARY) + sorted(k for k in result.estimates if k not in FIELD_SUMMARY)
        for k in keys:
            wr.writerow([k, _fmt(result.estimates[k])])


def write_spatial_moments(result: PosteriorResult, path):
    """Spatial posterior means, variances and edge covariances (for projection)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["kind", "i", "j", "value"])
        for i, v in enumerate(result.latent_mean.spatial):
            wr.writerow(["mean", i, i, _fmt(v)])
        for i, v in enumerate(result.spatial_var):
            wr.writerow(["cov", i, i, _fmt(v)])
        for (i, j), v in zip(result.spatial_edges, result.spatial_edge_cov):
            wr.writerow(["cov", int(i), int(j), _fmt(v)])


def read_spatial_moments(path):
    """Inverse of :func:`write_spatial_moments`: (mean, var, edges, edge_cov)."""
    means, diag, edges, ecov = {}, {}, [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            i, j, v = int(row["i"]), int(row["j"]), float(row["value"])
            if row["kind"] == "mean":
                means[i] = v
            elif i == j:
                diag[i] = v
            else:
                edges.append((i, j))
                ecov.append(v)
    n = len(means)
    mean = np.array([means[i] for i in range(n)])
    var = np.array([diag[i] for i in range(n)])
    return mean, var, np.asarray(edges, dtype=np.int64).reshape(-1, 2), np.asarray(ecov)
