"""Sparse Cholesky machinery for Gauss-Markov random fields.

Sparse SPD matrices are reordered with reverse Cuthill-McKee and factorized
in LAPACK band storage. Latent-model Hessians have an "arrow" structure: a
large sparse block (the spatial field) coupled to a small dense border
(fixed effects and temporal effects). :class:`ArrowCholesky` eliminates the
sparse block first and factorizes the dense Schur complement.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.csgraph import reverse_cuthill_mckee

from . import kernels
from .errors import NumericalError


def rcm_order(pattern) -> np.ndarray:
    """Fill-reducing (bandwidth-reducing) order for a symmetric pattern."""
    pattern = sp.csr_matrix(pattern)
    if pattern.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.asarray(reverse_cuthill_mckee(pattern, symmetric_mode=True),
                      dtype=np.int64)


def _to_lower_band(Qp):
    coo = sp.tril(Qp).tocoo()
    n = Qp.shape[0]
    depth = coo.row - coo.col
    b = int(depth.max()) if depth.size else 0
    ab = np.zeros((b + 1, n))
    np.add.at(ab, (depth, coo.col), coo.data)
    return ab


def _band_lower_solve(lb, rhs, trans=False):
    """Solve ``L x = rhs`` (or ``L^T x = rhs``) for band-stored lower L."""
    if rhs.size == 0:
        return rhs.copy()
    vec = rhs.ndim == 1
    b = rhs[:, None] if vec else rhs
    x, info = lapack.dtbtrs(lb, np.asfortranarray(b, dtype=np.float64),
                            uplo="L", trans="T" if trans else "N")
    if info != 0:
        raise NumericalError(f"banded triangular solve failed (info={info})")
    return x[:, 0] if vec else x


class BandedCholesky:
    """Cholesky factor ``P Q P^T = L L^T`` of a sparse SPD matrix.

    Parameters
    ----------
    Q : sparse matrix
        Symmetric positive definite.
    perm : array, optional
        Precomputed ordering (e.g. cached per mesh); RCM otherwise.
    """

    def __init__(self, Q, perm=None):
        Q = sp.csr_matrix(Q)
        n = Q.shape[0]
        self.n = n
        self.perm = rcm_order(Q) if perm is None else np.asarray(perm)
        self.iperm = np.empty_like(self.perm)
        self.iperm[self.perm] = np.arange(n)
        Qp = Q[self.perm][:, self.perm]
        ab = _to_lower_band(Qp)
        try:
            self.lb = sla.cholesky_banded(ab, lower=True, check_finite=True)
        except (sla.LinAlgError, ValueError) as exc:
            raise NumericalError(
                "matrix is not positive definite; for an SPDE precision try a "
                "larger kappa or check the mesh for degenerate triangles"
            ) from exc
        self.bandwidth = ab.shape[0] - 1
        self._band_inverse = None

    @property
    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(self.lb[0])))

    def solve(self, rhs):
        rp = np.asarray(rhs, dtype=float)[self.perm]
        y = _band_lower_solve(self.lb, rp)
        x = _band_lower_solve(self.lb, y, trans=True)
        return x[self.iperm]

    def sample(self, rng, size=None):
        """Draw from N(0, Q^{-1}): ``x = P^T L^{-T} z``."""
        shape = (self.n,) if size is None else (self.n, size)
        z = rng.standard_normal(shape)
        x = _band_lower_solve(self.lb, z, trans=True)
        return x[self.iperm]

    def band_inverse(self):
        """Band of ``(P Q P^T)^{-1}`` in band storage (permuted order)."""
        if self._band_inverse is None:
            self._band_inverse = kernels.band_selected_inverse(self.lb)
        return self._band_inverse

    def inverse_diagonal(self):
        return self.band_inverse()[0][self.iperm]

    def inverse_entries(self, rows, cols):
        """Entries of ``Q^{-1}`` at ``(rows, cols)``; pairs must lie in the band."""
        sb = self.band_inverse()
        i = self.iperm[np.asarray(rows)]
        j = self.iperm[np.asarray(cols)]
        lo = np.minimum(i, j)
        d = np.abs(i - j)
        if d.size and d.max() > self.bandwidth:
            raise ValueError("requested entry lies outside the factor band")
        return sb[d, lo]


class ArrowCholesky:
    """Factorization of ``H = [[S, Cg^T], [Cg, G]]`` with sparse ``S``.

    The latent ordering is ``[globals (m), spatial (n)]``: ``G`` is the dense
    ``m x m`` block of globals, ``S`` the sparse ``n x n`` spatial block and
    ``Cg`` the dense ``m x n`` coupling.
    """

    def __init__(self, H, n_global, perm=None):
        H = sp.csr_matrix(H)
        m = n_global
        n = H.shape[0] - m
        self.m, self.n = m, n
        G = H[:m, :m].toarray()
        if n > 0:
            S = H[m:, m:]
            self.sparse = BandedCholesky(S, perm=perm)
            Cg = H[:m, m:].toarray()
            # W = L_S^{-1} P Cg^T
            self.W = _band_lower_solve(self.sparse.lb,
                                       np.ascontiguousarray(Cg.T[self.sparse.perm]))
            schur = G - self.W.T @ self.W
        else:
            self.sparse = None
            self.W = np.zeros((0, m))
            schur = G
        if m > 0:
            try:
                self.Lg = np.linalg.cholesky(0.5 * (schur + schur.T))
            except np.linalg.LinAlgError as exc:
                raise NumericalError("latent precision is not positive definite") from exc
        else:
            self.Lg = np.zeros((0, 0))
        self._glob_cov = None
        self._V = None

    @property
    def logdet(self) -> float:
        ld = 2.0 * float(np.sum(np.log(np.diag(self.Lg)))) if self.m else 0.0
        if self.sparse is not None:
            ld += self.sparse.logdet
        return ld

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        m = self.m
        rg, rs = rhs[:m], rhs[m:]
        if self.sparse is None:
            return sla.cho_solve((self.Lg, True), rg) if m else rhs.copy()
        sc = self.sparse
        ys = _band_lower_solve(sc.lb, rs[sc.perm])
        if m:
            yg = sla.solve_triangular(self.Lg, rg - self.W.T @ ys, lower=True)
            xg = sla.solve_triangular(self.Lg, yg, lower=True, trans="T")
            ys = ys - self.W @ xg
        else:
            xg = np.zeros(0)
        xs = _band_lower_solve(sc.lb, ys, trans=True)[sc.iperm]
        return np.concatenate([xg, xs])

    def sample(self, rng):
        z = rng.standard_normal(self.m + self.n)
        zg, zs = z[:self.m], z[self.m:]
        xg = (sla.solve_triangular(self.Lg, zg, lower=True, trans="T")
              if self.m else np.zeros(0))
        if self.sparse is None:
            return xg
        sc = self.sparse
        xs = _band_lower_solve(sc.lb, zs - self.W @ xg, trans=True)[sc.iperm]
        return np.concatenate([xg, xs])

    def global_covariance(self):
        """Dense posterior covariance of the global block, ``Schur^{-1}``."""
        if self._glob_cov is None:
            if self.m:
                inv_l = sla.solve_triangular(self.Lg, np.eye(self.m), lower=True)
                self._glob_cov = inv_l.T @ inv_l
            else:
                self._glob_cov = np.zeros((0, 0))
        return self._glob_cov

    def _correction_factor(self):
        # U = V L_g^{-T} with V = S^{-1} Cg^T (permuted): Cov_S = S^{-1} + U U^T
        if self._V is None:
            sc = self.sparse
            V = _band_lower_solve(sc.lb, self.W, trans=True) if self.m else \
                np.zeros((self.n, 0))
            if self.m:
                U = sla.solve_triangular(self.Lg, V.T, lower=True).T
            else:
                U = V
            self._V = U
        return self._V

    def spatial_covariance_entries(self, rows, cols):
        """Posterior covariances between spatial entries (local indices)."""
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        sc = self.sparse
        base = sc.inverse_entries(rows, cols)
        if self.m == 0:
            return base
        U = self._correction_factor()
        pi = sc.iperm[rows]
        pj = sc.iperm[cols]
        return base + np.einsum("ij,ij->i", U[pi], U[pj])

    def spatial_global_covariance(self):
        """Dense ``n x m`` covariance between spatial and global entries."""
        # Cov(x_s, x_g) = -S^{-1} Cg^T Schur^{-1}
        sc = self.sparse
        if self.m == 0:
            return np.zeros((self.n, 0))
        V = _band_lower_solve(sc.lb, self.W, trans=True)
        return -(V @ self.global_covariance())[sc.iperm]
