"""Finite-element SPDE operators and the Matérn machinery around them.

For smoothness ``nu = 1`` in two dimensions the SPDE
``(kappa^2 - Laplacian) u = W / tau`` discretised with piecewise-linear
elements on a mesh gives the GMRF precision

    Q = tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G)

with lumped (diagonal) mass matrix ``C`` and stiffness matrix ``G``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import special

from .errors import NumericalError
from .gmrf import BandedCholesky, rcm_order


@dataclass(frozen=True)
class MaternParams:
    kappa: float
    tau: float
    nu: float = 1.0
    sigma2_e: float = float("nan")

    def __post_init__(self):
        if not (self.kappa > 0 and self.tau > 0 and self.nu > 0):
            raise ValueError("kappa, tau and nu must be positive")

    @property
    def sigma2_x(self) -> float:
        return stationary_variance(self.kappa, self.tau, self.nu)

    @property
    def nominal_range(self) -> float:
        return nominal_range(self.kappa, self.nu)


@dataclass(frozen=True, eq=False)
class SpdeOperators:
    """Lumped mass ``C`` (diagonal), stiffness ``G`` and ``G C^{-1} G``."""
    C: sp.csr_matrix
    G: sp.csr_matrix
    C_inv_diag: np.ndarray
    G2: sp.csr_matrix
    perm: np.ndarray

    @property
    def n(self) -> int:
        return self.C.shape[0]


def matern_correlation(d, kappa, nu=1.0):
    """Matérn correlation ``2^{1-nu}/Gamma(nu) (kappa d)^nu K_nu(kappa d)``.

    Returns exactly 1 at ``d = 0`` and 0 once ``K_nu`` underflows.
    """
    if not (kappa > 0 and nu > 0):
        raise ValueError("kappa and nu must be positive")
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be non-negative")
    x = kappa * d
    out = np.ones_like(x)
    small = x < 1e-12
    big = ~small
    xb = x[big]
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        logval = ((1.0 - nu) * math.log(2.0) - special.gammaln(nu) + nu * np.log(xb)
                  + np.log(special.kve(nu, xb)) - xb)
        vals = np.exp(logval)
    out[big] = np.where(np.isfinite(vals), vals, 0.0)
    out = np.clip(out, 0.0, 1.0)
    return out if out.ndim else float(out)


def nominal_range(kappa, nu=1.0):
    """``sqrt(8 nu) / kappa``."""
    if not (np.all(np.asarray(kappa) > 0) and nu > 0):
        raise ValueError("kappa and nu must be positive")
    return np.sqrt(8.0 * nu) / kappa


def stationary_variance(kappa, tau, nu=1.0):
    """Marginal variance of the 2-D SPDE field, ``Gamma(nu)/(Gamma(nu+1) 4 pi kappa^{2nu} tau^2)``."""
    return math.gamma(nu) / (math.gamma(nu + 1.0) * 4.0 * math.pi
                             * kappa ** (2.0 * nu) * tau ** 2)


def _element_geometry(vertices, triangles):
    p = vertices[triangles]
    # edge opposite local vertex i
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    area = 0.5 * (e[:, 2, 0] * (-e[:, 1, 1]) - e[:, 2, 1] * (-e[:, 1, 0]))
    return e, area


def assemble_fem(mesh) -> SpdeOperators:
    """Piecewise-linear FEM mass (lumped) and stiffness matrices on ``mesh``."""
    V = np.asarray(mesh.vertices, dtype=float)
    T = np.asarray(mesh.triangles, dtype=np.int64)
    n = V.shape[0]
    e, area = _element_geometry(V, T)
    scale = max(float(np.ptp(V[:, 0])), float(np.ptp(V[:, 1])), 1e-300)
    bad = np.nonzero(np.abs(area) <= 1e-14 * scale * scale)[0]
    if bad.size:
        t = int(bad[0])
        raise NumericalError(f"degenerate triangle {t} with vertices {T[t].tolist()}")
    area = np.abs(area)
    K = np.einsum("tid,tjd->tij", e, e) / (4.0 * area)[:, None, None]
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    G = sp.coo_matrix((K.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    G = 0.5 * (G + G.T)
    c = np.zeros(n)
    np.add.at(c, T.ravel(), np.repeat(area / 3.0, 3))
    if np.any(c <= 0):
        raise NumericalError("mesh has vertices not attached to any triangle")
    C = sp.diags(c).tocsr()
    cinv = 1.0 / c
    G2 = (G @ sp.diags(cinv) @ G).tocsr()
    G2 = 0.5 * (G2 + G2.T)
    return SpdeOperators(C=C, G=G.tocsr(), C_inv_diag=cinv, G2=G2.tocsr(),
                         perm=rcm_order(G2 + G))


def consistent_mass(mesh) -> sp.csr_matrix:
    """Non-lumped mass matrix (used for diagnostics)."""
    V = np.asarray(mesh.vertices, dtype=float)
    T = np.asarray(mesh.triangles, dtype=np.int64)
    _, area = _element_geometry(V, T)
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    vals = np.abs(area)[:, None, None] * local[None]
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = V.shape[0]
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def precision_unscaled(ops: SpdeOperators, kappa: float) -> sp.csr_matrix:
    k2 = kappa * kappa
    return (k2 * k2) * ops.C + (2.0 * k2) * ops.G + ops.G2


def precision(ops: SpdeOperators, kappa: float, tau: float, check: bool = False):
    """SPDE precision ``tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G)``."""
    if not (kappa > 0 and tau > 0):
        raise ValueError("kappa and tau must be positive")
    Q = ((tau * tau) * precision_unscaled(ops, kappa)).tocsr()
    if check:
        try:
            BandedCholesky(Q, perm=ops.perm)
        except NumericalError as exc:
            raise NumericalError(f"SPDE precision is not positive definite ({exc}); "
                                 "try a larger kappa or repair the mesh") from exc
    return Q


def sample_field(Q, seed, size=None, perm=None):
    """Draw from the zero-mean GMRF with precision ``Q``; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    try:
        factor = BandedCholesky(Q, perm=perm)
    except NumericalError as exc:
        raise NumericalError(f"cannot factorize precision for sampling: {exc}") from exc
    return factor.sample(rng, size)


def write_coo(matrix, path):
    """Write a sparse matrix as ``row col value`` lines (0-based)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# {coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
        shape = (int(header[0]), int(header[1]))
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix(shape)
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
                         shape=shape).tocsr()
