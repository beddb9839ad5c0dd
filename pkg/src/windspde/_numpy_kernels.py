"""Pure-numpy implementations of the hot kernels.

Each function here has a numba twin in ``_numba_kernels`` with the same
signature and results (up to floating-point reassociation).
"""
import numpy as np


def weibull_terms(logy, eta, alpha):
    """Log-likelihood sum, gradient and negative curvature in the predictor.

    Uses the log link ``lambda = exp(eta)``. The curvature is returned with a
    positive sign: ``-d2/deta2 loglik = alpha**2 * (y/lambda)**alpha``.
    """
    u = alpha * (logy - eta)
    t = np.exp(u)
    ll = np.sum(np.log(alpha) + (alpha - 1.0) * logy - alpha * eta - t)
    grad = alpha * (t - 1.0)
    curv = alpha * alpha * t
    return float(ll), grad, curv


def locate_points(points, vertices, triangles, origin, cell, shape,
                  cell_start, cell_tris, eps):
    n = points.shape[0]
    tri_of = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    nx, ny = shape
    ix = np.floor((points[:, 0] - origin[0]) / cell).astype(np.int64)
    iy = np.floor((points[:, 1] - origin[1]) / cell).astype(np.int64)
    inside_grid = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    cid = np.where(inside_grid, ix * ny + iy, 0)
    start = np.where(inside_grid, cell_start[cid], 0)
    count = np.where(inside_grid, cell_start[cid + 1] - cell_start[cid], 0)
    max_count = int(count.max()) if n else 0
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    for k in range(max_count):
        todo = (tri_of < 0) & (count > k)
        if not todo.any():
            break
        idx = np.nonzero(todo)[0]
        t = cell_tris[start[idx] + k]
        p = points[idx]
        ab = b[t] - a[t]
        ac = c[t] - a[t]
        ap = p - a[t]
        det = ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0]
        lb = (ap[:, 0] * ac[:, 1] - ap[:, 1] * ac[:, 0]) / det
        lc = (ab[:, 0] * ap[:, 1] - ab[:, 1] * ap[:, 0]) / det
        la = 1.0 - lb - lc
        hit = (la >= -eps) & (lb >= -eps) & (lc >= -eps)
        h = idx[hit]
        tri_of[h] = t[hit]
        bary[h, 0] = la[hit]
        bary[h, 1] = lb[hit]
        bary[h, 2] = lc[hit]
    return tri_of, bary


def band_selected_inverse(lb):
    """Takahashi recursion on a lower band Cholesky factor.

    ``lb[d, j] = L[j + d, j]``. Returns the same band of ``(L L^T)^{-1}``.
    """
    b = lb.shape[0] - 1
    n = lb.shape[1]
    sb = np.zeros_like(lb)
    for j in range(n - 1, -1, -1):
        m = min(b, n - 1 - j)
        ljj = lb[0, j]
        if m == 0:
            sb[0, j] = 1.0 / (ljj * ljj)
            continue
        l = lb[1:m + 1, j]
        # dense window of Sigma over rows/cols j+1 .. j+m
        block = np.empty((m, m))
        for r in range(m):
            col = j + 1 + r
            depth = m - r
            block[r:, r] = sb[:depth, col]
            block[r, r:] = sb[:depth, col]
        v = block @ l
        sb[1:m + 1, j] = -v / ljj
        sb[0, j] = 1.0 / (ljj * ljj) + np.dot(l, v) / (ljj * ljj)
    return sb
