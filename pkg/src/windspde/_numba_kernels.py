"""numba-compiled twins of the kernels in ``_numpy_kernels``."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _weibull_terms(logy, eta, alpha):
    n = logy.shape[0]
    grad = np.empty(n)
    curv = np.empty(n)
    la = math.log(alpha)
    a2 = alpha * alpha
    ll = 0.0
    for i in range(n):
        t = math.exp(alpha * (logy[i] - eta[i]))
        ll += la + (alpha - 1.0) * logy[i] - alpha * eta[i] - t
        grad[i] = alpha * (t - 1.0)
        curv[i] = a2 * t
    return ll, grad, curv


def weibull_terms(logy, eta, alpha):
    ll, grad, curv = _weibull_terms(np.ascontiguousarray(logy, dtype=np.float64),
                                    np.ascontiguousarray(eta, dtype=np.float64),
                                    float(alpha))
    return float(ll), grad, curv


@njit(cache=True)
def _locate_points(points, vertices, triangles, ox, oy, cell, nx, ny,
                   cell_start, cell_tris, eps):
    n = points.shape[0]
    tri_of = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 3))
    for i in range(n):
        px = points[i, 0]
        py = points[i, 1]
        ix = int(math.floor((px - ox) / cell))
        iy = int(math.floor((py - oy) / cell))
        if ix < 0 or ix >= nx or iy < 0 or iy >= ny:
            continue
        cid = ix * ny + iy
        for s in range(cell_start[cid], cell_start[cid + 1]):
            t = cell_tris[s]
            a = triangles[t, 0]
            b = triangles[t, 1]
            c = triangles[t, 2]
            abx = vertices[b, 0] - vertices[a, 0]
            aby = vertices[b, 1] - vertices[a, 1]
            acx = vertices[c, 0] - vertices[a, 0]
            acy = vertices[c, 1] - vertices[a, 1]
            apx = px - vertices[a, 0]
            apy = py - vertices[a, 1]
            det = abx * acy - aby * acx
            lb = (apx * acy - apy * acx) / det
            lc = (abx * apy - aby * apx) / det
            la = 1.0 - lb - lc
            if la >= -eps and lb >= -eps and lc >= -eps:
                tri_of[i] = t
                bary[i, 0] = la
                bary[i, 1] = lb
                bary[i, 2] = lc
                break
    return tri_of, bary


def locate_points(points, vertices, triangles, origin, cell, shape,
                  cell_start, cell_tris, eps):
    return _locate_points(np.ascontiguousarray(points, dtype=np.float64),
                          np.ascontiguousarray(vertices, dtype=np.float64),
                          np.ascontiguousarray(triangles, dtype=np.int64),
                          float(origin[0]), float(origin[1]), float(cell),
                          int(shape[0]), int(shape[1]),
                          np.ascontiguousarray(cell_start, dtype=np.int64),
                          np.ascontiguousarray(cell_tris, dtype=np.int64),
                          float(eps))


@njit(cache=True)
def _band_selected_inverse(lb):
    b = lb.shape[0] - 1
    n = lb.shape[1]
    sb = np.zeros_like(lb)
    for j in range(n - 1, -1, -1):
        m = min(b, n - 1 - j)
        ljj = lb[0, j]
        acc_diag = 0.0
        for d in range(1, m + 1):
            i = j + d
            s = 0.0
            for e in range(1, m + 1):
                k = j + e
                if i >= k:
                    s += lb[e, j] * sb[i - k, k]
                else:
                    s += lb[e, j] * sb[k - i, i]
            sb[d, j] = -s / ljj
            acc_diag += lb[d, j] * s
        sb[0, j] = 1.0 / (ljj * ljj) + acc_diag / (ljj * ljj)
    return sb


def band_selected_inverse(lb):
    return _band_selected_inverse(np.ascontiguousarray(lb, dtype=np.float64))
