"""Latent Gaussian model: fixed effects, RW2 altitude spline, two AR(1)
monthly effects and the SPDE spatial field.

The linear predictor is

    eta_i = x_i' beta + s[alt(i)] + f[f_month(i)] + c[c_month(i)] + (A u)_i

Each of ``s``, ``f`` and ``c`` carries a sum-to-zero constraint. Rather
than conditioning on the constraint after the fact, each constrained block
is written in a difference basis ``x = T w`` with ``w`` one shorter than
``x``: ``x_1 = w_1``, ``x_j = w_j - w_{j-1}``, ``x_n = -w_{n-1}``. The sum
telescopes to zero, ``T`` is bidiagonal, and the prior of ``w`` is the
Gaussian with precision ``T' Q T``, which is exactly the constrained prior
restricted to the subspace. Inference runs in these working coordinates.

Working order: ``[beta | w_spline | w_f | w_c | spatial]``. Everything
before the spatial block is small and dense ("globals").
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sp

from . import kernels
from .errors import DataError, NumericalError
from .gmrf import BandedCholesky
from .mesh import Mesh, projector
from .priors import (HyperPriors, pc_matern_log_prior, pc_prec_logpdf,
                     pc_prior_logpdf)
from .spde import assemble_fem, precision as spde_precision

FIXED_EFFECTS = ("intercept", "cos_direct", "sin_direct")
FAMILIES = ("weibull", "gaussian")
LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# structured precisions
# ---------------------------------------------------------------------------

def rw2_precision(K, precision=1.0):
    """``precision * D'D`` with ``D`` the (K-2) x K second-difference operator."""
    if K < 3:
        raise ValueError(f"RW2 needs at least 3 knots, got {K}")
    D = sp.diags([np.ones(K - 2), -2.0 * np.ones(K - 2), np.ones(K - 2)],
                 [0, 1, 2], shape=(K - 2, K))
    return (precision * (D.T @ D)).tocsr()


def ar1_precision(n, rho, precision=1.0):
    """Stationary AR(1) precision with marginal precision ``precision``."""
    if n < 1:
        raise ValueError("AR(1) length must be at least 1")
    if not abs(rho) < 1.0:
        raise ValueError(f"AR(1) correlation must satisfy |rho| < 1, got {rho}")
    if not precision > 0:
        raise ValueError("AR(1) precision must be positive")
    diag = np.full(n, 1.0 + rho * rho)
    diag[0] = diag[-1] = 1.0
    if n == 1:
        diag[0] = 1.0 - rho * rho
    off = np.full(n - 1, -rho)
    Q = sp.diags([off, diag, off], [-1, 0, 1], shape=(n, n))
    return (precision / (1.0 - rho * rho) * Q).tocsr()


def sum_to_zero_basis(n):
    """``n x (n-1)`` difference basis whose columns sum to zero."""
    if n < 2:
        return sp.csr_matrix((n, 0))
    k = np.arange(n - 1)
    rows = np.concatenate([k, k + 1])
    cols = np.concatenate([k, k])
    vals = np.concatenate([np.ones(n - 1), -np.ones(n - 1)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n - 1))


# ---------------------------------------------------------------------------
# data and specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelData:
    """Columns of the prime dataset the model needs, as float/int arrays."""
    y: np.ndarray
    cos_direct: np.ndarray
    sin_direct: np.ndarray
    altitude: np.ndarray
    f_month: np.ndarray
    c_month: np.ndarray
    lon: np.ndarray
    lat: np.ndarray

    def __len__(self):
        return int(self.y.shape[0])

    @classmethod
    def from_frame(cls, df: pd.DataFrame):
        need = ["wind_speed", "cos_direct", "sin_direct", "altitude", "f_month",
                "c_month", "longitude", "latitude"]
        missing = [c for c in need if c not in df.columns]
        if missing:
            raise DataError(f"dataset lacks columns: {', '.join(missing)}")
        return cls(
            y=df["wind_speed"].to_numpy(dtype=float),
            cos_direct=df["cos_direct"].to_numpy(dtype=float),
            sin_direct=df["sin_direct"].to_numpy(dtype=float),
            altitude=df["altitude"].to_numpy(dtype=float),
            f_month=df["f_month"].to_numpy(dtype=np.int64),
            c_month=df["c_month"].to_numpy(dtype=np.int64),
            lon=df["longitude"].to_numpy(dtype=float),
            lat=df["latitude"].to_numpy(dtype=float),
        )

    def with_y(self, y):
        return ModelData(np.asarray(y, dtype=float), self.cos_direct, self.sin_direct,
                         self.altitude, self.f_month, self.c_month, self.lon, self.lat)

    @property
    def locations(self):
        return np.column_stack([self.lon, self.lat])


@dataclass(frozen=True, eq=False)
class ModelSpec:
    altitude_knots: tuple = ()
    n_f_month: int = 12
    n_c_month: int = 1
    mesh: Mesh | None = None
    fixed: tuple = FIXED_EFFECTS
    use_spline: bool = True
    use_f_month: bool = True
    use_c_month: bool = True
    use_spatial: bool = True
    family: str = "weibull"
    priors: HyperPriors = field(default_factory=HyperPriors)
    fixed_prec: float = 1e-4
    rw2_diag: float = 1e-4

    def __post_init__(self):
        knots = tuple(float(k) for k in self.altitude_knots)
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise ValueError("altitude knots must be sorted and distinct")
        object.__setattr__(self, "altitude_knots", knots)
        if self.n_c_month < 1:
            raise ValueError("n_c_month must be at least 1")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        bad = [f for f in self.fixed if f not in FIXED_EFFECTS]
        if bad:
            raise ValueError(f"unknown fixed effects {bad}")
        if self.use_spline and len(knots) < 3:
            raise ValueError("the RW2 spline needs at least 3 altitude knots")
        if self.use_spatial and self.mesh is None:
            raise ValueError("spatial effect requested without a mesh")

    @classmethod
    def from_data(cls, data: ModelData, mesh=None, **kw):
        """Knots at the observed altitude levels, c_month span from the data."""
        knots = tuple(np.unique(data.altitude).tolist()) if len(data) else ()
        n_c = int(data.c_month.max()) if len(data) else 1
        kw.setdefault("use_spline", len(knots) >= 3)
        kw.setdefault("use_c_month", n_c >= 2)
        kw.setdefault("use_spatial", mesh is not None)
        return cls(altitude_knots=knots, n_c_month=n_c, mesh=mesh, **kw)


@dataclass(frozen=True)
class LatentState:
    """Latent vector in natural coordinates."""
    beta: np.ndarray
    spline: np.ndarray
    f_month_effect: np.ndarray
    c_month_effect: np.ndarray
    spatial: np.ndarray

    def concat(self):
        return np.concatenate([self.beta, self.spline, self.f_month_effect,
                               self.c_month_effect, self.spatial])


@dataclass(frozen=True, eq=False)
class Design:
    X: np.ndarray
    Z_spline: sp.csr_matrix
    Z_f: sp.csr_matrix
    Z_c: sp.csr_matrix
    A: sp.csr_matrix

    def eta(self, state: LatentState):
        return (self.X @ state.beta + self.Z_spline @ state.spline
                + self.Z_f @ state.f_month_effect + self.Z_c @ state.c_month_effect
                + self.A @ state.spatial)


def _incidence(index, n_levels):
    n = len(index)
    return sp.csr_matrix((np.ones(n), (np.arange(n), index)), shape=(n, n_levels))


def build_design(data: ModelData, spec: ModelSpec) -> Design:
    """Fixed-effect matrix, incidence maps and spatial projector."""
    n = len(data)
    cols = {"intercept": np.ones(n), "cos_direct": data.cos_direct,
            "sin_direct": data.sin_direct}
    X = np.column_stack([cols[f] for f in spec.fixed]) if spec.fixed else np.zeros((n, 0))
    if spec.use_spline:
        knots = np.asarray(spec.altitude_knots)
        pos = np.searchsorted(knots, data.altitude)
        posc = np.minimum(pos, len(knots) - 1)
        bad = (pos >= len(knots)) | (knots[posc] != data.altitude)
        if np.any(bad):
            i = int(np.nonzero(bad)[0][0])
            raise DataError(f"record {i}: altitude {data.altitude[i]} is not a knot; "
                            f"known knots: {list(spec.altitude_knots)}")
        Zs = _incidence(posc, len(knots))
    else:
        Zs = sp.csr_matrix((n, 0))
    if spec.use_f_month:
        fm = data.f_month
        if n and (fm.min() < 1 or fm.max() > spec.n_f_month):
            raise DataError(f"f_month outside 1..{spec.n_f_month}")
        Zf = _incidence(fm - 1, spec.n_f_month)
    else:
        Zf = sp.csr_matrix((n, 0))
    if spec.use_c_month:
        cm = data.c_month
        if n and (cm.min() < 1 or cm.max() > spec.n_c_month):
            raise DataError(f"c_month outside 1..{spec.n_c_month}")
        Zc = _incidence(cm - 1, spec.n_c_month)
    else:
        Zc = sp.csr_matrix((n, 0))
    if spec.use_spatial:
        proj = projector(spec.mesh, data.locations)
        if proj.n_outside:
            i = int(np.nonzero(proj.outside)[0][0])
            raise DataError(f"{proj.n_outside} record(s) lie outside the mesh "
                            f"(first: record {i})")
        A = proj.matrix
    else:
        A = sp.csr_matrix((n, 0))
    return Design(X, Zs, Zf, Zc, A)


# ---------------------------------------------------------------------------
# hyperparameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HyperParams:
    """Natural-scale hyperparameters; ``None`` for components not in the model."""
    alpha: float | None = None
    log_kappa: float | None = None
    log_tau: float | None = None
    rho_f: float | None = None
    rho_c: float | None = None
    log_prec_f: float | None = None
    log_prec_c: float | None = None
    log_prec_rw2: float | None = None
    log_prec_obs: float | None = None


# internal name -> (HyperParams field, to-internal, from-internal)
_TRANSFORMS = {
    "log_alpha": ("alpha", math.log, math.exp),
    "log_prec_obs": ("log_prec_obs", float, float),
    "log_prec_rw2": ("log_prec_rw2", float, float),
    "log_prec_f": ("log_prec_f", float, float),
    "atanh_rho_f": ("rho_f", math.atanh, math.tanh),
    "log_prec_c": ("log_prec_c", float, float),
    "atanh_rho_c": ("rho_c", math.atanh, math.tanh),
    "log_kappa": ("log_kappa", float, float),
    "log_tau": ("log_tau", float, float),
}


def hyper_names(spec: ModelSpec):
    names = ["log_alpha"] if spec.family == "weibull" else ["log_prec_obs"]
    if spec.use_spline:
        names.append("log_prec_rw2")
    if spec.use_f_month:
        names += ["log_prec_f", "atanh_rho_f"]
    if spec.use_c_month:
        names += ["log_prec_c", "atanh_rho_c"]
    if spec.use_spatial:
        names += ["log_kappa", "log_tau"]
    return tuple(names)


def hyper_to_vector(h: HyperParams, names):
    out = []
    for nm in names:
        fld, fwd, _ = _TRANSFORMS[nm]
        v = getattr(h, fld)
        if v is None:
            raise ValueError(f"hyperparameter {fld} required by the model is missing")
        out.append(fwd(v))
    return np.asarray(out, dtype=float)


def hyper_from_vector(theta, names) -> HyperParams:
    kw = {}
    for nm, v in zip(names, theta):
        fld, _, back = _TRANSFORMS[nm]
        kw[fld] = back(float(v))
    return HyperParams(**kw)


def natural_value(name, value):
    """Internal coordinate to its reporting scale (alpha, precision, rho, kappa, tau)."""
    if name.startswith("log_"):
        return math.exp(value)
    if name.startswith("atanh_"):
        return math.tanh(value)
    return value


def natural_name(name):
    return {"log_alpha": "alpha", "log_prec_obs": "prec_obs", "log_prec_rw2": "prec_rw2",
            "log_prec_f": "prec_f", "atanh_rho_f": "rho_f", "log_prec_c": "prec_c",
            "atanh_rho_c": "rho_c", "log_kappa": "kappa", "log_tau": "tau"}[name]


# ---------------------------------------------------------------------------
# joint precision
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class JointPrecision:
    """Block-diagonal prior precision in natural coordinates plus constraints.

    ``basis`` maps working to natural coordinates; ``constraints`` holds one
    sum-to-zero row per constrained block, so ``constraints @ basis = 0``.
    """
    matrix: sp.csr_matrix
    offsets: dict
    basis: sp.csr_matrix
    constraints: sp.csr_matrix

    def constrained(self) -> sp.csr_matrix:
        return (self.basis.T @ self.matrix @ self.basis).tocsr()


class LatentModel:
    """Everything that depends on (data, spec) but not on the hyperparameters."""

    def __init__(self, data: ModelData, spec: ModelSpec):
        self.data = data
        self.spec = spec
        if len(data) and spec.family == "weibull" and np.any(data.y <= 0):
            i = int(np.nonzero(data.y <= 0)[0][0])
            raise DataError(f"record {i}: Weibull response must be positive, got {data.y[i]}")
        self.design = build_design(data, spec)
        self.names = hyper_names(spec)
        self.n_fixed = self.design.X.shape[1]
        self.K = len(spec.altitude_knots) if spec.use_spline else 0
        self.n_f = spec.n_f_month if spec.use_f_month else 0
        self.n_c = spec.n_c_month if spec.use_c_month else 0
        self.T_s = sum_to_zero_basis(self.K) if self.K else sp.csr_matrix((0, 0))
        self.T_f = sum_to_zero_basis(self.n_f) if self.n_f else sp.csr_matrix((0, 0))
        self.T_c = sum_to_zero_basis(self.n_c) if self.n_c else sp.csr_matrix((0, 0))
        if spec.use_spatial:
            self.ops = assemble_fem(spec.mesh)
            self.n_spatial = spec.mesh.n_vertices
        else:
            self.ops = None
            self.n_spatial = 0
        sizes = [self.n_fixed, self.T_s.shape[1], self.T_f.shape[1], self.T_c.shape[1]]
        self.block_sizes = dict(zip(("beta", "spline", "f", "c"), sizes))
        self.n_global = int(sum(sizes))
        self.n_latent = self.n_global + self.n_spatial
        d = self.design
        self.B = sp.hstack([sp.csr_matrix(d.X), d.Z_spline @ self.T_s, d.Z_f @ self.T_f,
                            d.Z_c @ self.T_c, d.A], format="csr")
        self.basis = sp.block_diag([sp.identity(self.n_fixed), self.T_s, self.T_f,
                                    self.T_c, sp.identity(self.n_spatial)],
                                   format="csr") if self.n_latent else sp.csr_matrix((0, 0))
        self.logy = np.log(data.y) if spec.family == "weibull" and len(data) else data.y
        self.perm = self.ops.perm if self.ops is not None else None

    # -- hyperparameters ---------------------------------------------------

    def hyper_dict(self, theta):
        return {nm: float(v) for nm, v in zip(self.names, theta)}

    def initial_theta(self):
        """Starting point of the outer optimisation (prior-reasonable values)."""
        init = {"log_alpha": 0.0, "log_prec_obs": 0.0, "log_prec_rw2": math.log(10.0),
                "log_prec_f": math.log(10.0), "atanh_rho_f": 0.0,
                "log_prec_c": math.log(10.0), "atanh_rho_c": 0.0}
        if self.spec.use_spatial:
            V = self.spec.mesh.vertices
            inner = V[self.spec.mesh.boundary_flag == 0]
            inner = inner if len(inner) else V
            diam = float(np.hypot(*np.ptp(inner, axis=0)))
            kappa = math.sqrt(8.0) / max(0.3 * diam, 1e-6)
            sigma = 0.3
            init["log_kappa"] = math.log(kappa)
            init["log_tau"] = -0.5 * math.log(4 * math.pi) - math.log(kappa) - math.log(sigma)
        if self.spec.family == "weibull" and len(self.data):
            init["log_alpha"] = math.log(_moment_shape(self.logy))
        return np.array([init[n] for n in self.names])

    def log_hyper_prior(self, theta):
        """Log prior density of the internal (unconstrained) hyperparameters."""
        pr = self.spec.priors
        h = self.hyper_dict(theta)
        lp = 0.0
        if "log_alpha" in h:
            a = math.exp(h["log_alpha"])
            lp += float(pc_prior_logpdf(a, pr.alpha)) + h["log_alpha"]
        if "log_prec_obs" in h:
            lp += _log_prec_prior(h["log_prec_obs"], pr.obs_prec_u, pr.obs_prec_a)
        for nm in ("log_prec_rw2", "log_prec_f", "log_prec_c"):
            if nm in h:
                lp += _log_prec_prior(h[nm], pr.prec_u, pr.prec_a)
        for nm in ("atanh_rho_f", "atanh_rho_c"):
            if nm in h:
                z = h[nm] / pr.rho_sd
                lp += -0.5 * z * z - math.log(pr.rho_sd) - 0.5 * LOG_2PI
        if "log_kappa" in h:
            lp += pc_matern_log_prior(h["log_kappa"], h["log_tau"], pr)
        return lp

    # -- prior precision ---------------------------------------------------

    def joint_precision(self, theta) -> JointPrecision:
        h = self.hyper_dict(theta)
        blocks = [self.spec.fixed_prec * sp.identity(self.n_fixed, format="csr")]
        if self.K:
            blocks.append(rw2_precision(self.K, math.exp(h["log_prec_rw2"]))
                          + self.spec.rw2_diag * sp.identity(self.K))
        if self.n_f:
            blocks.append(ar1_precision(self.n_f, math.tanh(h["atanh_rho_f"]),
                                        math.exp(h["log_prec_f"])))
        if self.n_c:
            blocks.append(ar1_precision(self.n_c, math.tanh(h["atanh_rho_c"]),
                                        math.exp(h["log_prec_c"])))
        if self.n_spatial:
            blocks.append(self.spatial_precision(theta))
        sizes = [self.n_fixed, self.K, self.n_f, self.n_c, self.n_spatial]
        offsets, o = {}, 0
        for name, s in zip(("beta", "spline", "f", "c", "spatial"), sizes):
            offsets[name] = (o, o + s)
            o += s
        rows = []
        for name, s in zip(("spline", "f", "c"), sizes[1:4]):
            if s:
                r = np.zeros(o)
                a, b = offsets[name]
                r[a:b] = 1.0
                rows.append(r)
        C = sp.csr_matrix(np.array(rows)) if rows else sp.csr_matrix((0, o))
        Q = sp.block_diag([b for b in blocks if b.shape[0]], format="csr") if o else \
            sp.csr_matrix((0, 0))
        return JointPrecision(Q, offsets, self.basis, C)

    def spatial_precision(self, theta):
        h = self.hyper_dict(theta)
        return spde_precision(self.ops, math.exp(h["log_kappa"]), math.exp(h["log_tau"]))

    def working_prior(self, theta):
        """Prior precision of the working coordinates and its log-determinant."""
        h = self.hyper_dict(theta)
        dense = [self.spec.fixed_prec * np.eye(self.n_fixed)]
        if self.K:
            Qs = rw2_precision(self.K, math.exp(h["log_prec_rw2"])) \
                + self.spec.rw2_diag * sp.identity(self.K)
            dense.append((self.T_s.T @ Qs @ self.T_s).toarray())
        if self.n_f:
            Qf = ar1_precision(self.n_f, math.tanh(h["atanh_rho_f"]), math.exp(h["log_prec_f"]))
            dense.append((self.T_f.T @ Qf @ self.T_f).toarray())
        if self.n_c:
            Qc = ar1_precision(self.n_c, math.tanh(h["atanh_rho_c"]), math.exp(h["log_prec_c"]))
            dense.append((self.T_c.T @ Qc @ self.T_c).toarray())
        logdet = 0.0
        for blk in dense:
            if blk.shape[0]:
                try:
                    L = np.linalg.cholesky(blk)
                except np.linalg.LinAlgError as exc:
                    raise NumericalError("prior block is not positive definite") from exc
                logdet += 2.0 * float(np.sum(np.log(np.diag(L))))
        parts = [sp.csr_matrix(b) for b in dense if b.shape[0]]
        if self.n_spatial:
            Qsp = self.spatial_precision(theta)
            logdet += BandedCholesky(Qsp, perm=self.perm).logdet
            parts.append(Qsp)
        Qw = sp.block_diag(parts, format="csr") if parts else sp.csr_matrix((0, 0))
        return Qw, logdet

    # -- likelihood --------------------------------------------------------

    def loglik_terms(self, eta, theta):
        """Log-likelihood, its gradient in eta and the positive curvature."""
        if len(eta) == 0:
            return 0.0, np.zeros(0), np.zeros(0)
        if not np.all(np.isfinite(eta)):
            i = int(np.nonzero(~np.isfinite(eta))[0][0])
            raise NumericalError(f"non-finite linear predictor at record {i}")
        h = self.hyper_dict(theta)
        if self.spec.family == "weibull":
            return kernels.weibull_terms(self.logy, eta, math.exp(h["log_alpha"]))
        tau = math.exp(h["log_prec_obs"])
        r = self.data.y - eta
        ll = 0.5 * len(r) * (math.log(tau) - LOG_2PI) - 0.5 * tau * float(r @ r)
        return ll, tau * r, np.full(len(r), tau)

    # -- coordinates -------------------------------------------------------

    def to_state(self, w) -> LatentState:
        x = self.basis @ np.asarray(w) if self.n_latent else np.zeros(0)
        return self.split_natural(x)

    def split_natural(self, x) -> LatentState:
        o = np.cumsum([0, self.n_fixed, self.K, self.n_f, self.n_c, self.n_spatial])
        return LatentState(*(np.asarray(x[o[i]:o[i + 1]]) for i in range(5)))


def _log_prec_prior(log_prec, u, a):
    return float(pc_prec_logpdf(math.exp(log_prec), u, a)) + log_prec


def _moment_shape(logy):
    """Weibull shape from the sd of log y (sd = pi / (alpha sqrt 6))."""
    sd = float(np.std(logy))
    if not sd > 0:
        return 1.0
    return float(np.clip(math.pi / (sd * math.sqrt(6.0)), 0.2, 20.0))


def assemble_joint(spec: ModelSpec, hyper: HyperParams, data: ModelData | None = None):
    """Joint prior precision for ``spec`` at ``hyper``."""
    if data is None:
        data = empty_data()
    model = LatentModel(data, spec)
    return model.joint_precision(hyper_to_vector(hyper, model.names))


def empty_data() -> ModelData:
    z = np.zeros(0)
    zi = np.zeros(0, dtype=np.int64)
    return ModelData(z, z, z, z, zi, zi, z, z)
