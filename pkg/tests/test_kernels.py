import os
import subprocess
import sys

import numpy as np
import pytest

from windspde import _numba_kernels as nb
from windspde import _numpy_kernels as npk
from windspde import kernels
from windspde.gmrf import BandedCholesky, _to_lower_band
from windspde.mesh import _bucket_triangles, triangulate


def test_weibull_terms_agree():
    rng = np.random.default_rng(1)
    logy = rng.normal(0.5, 0.6, 300)
    eta = rng.normal(0.4, 0.3, 300)
    for alpha in (0.7, 1.0, 2.3):
        a = npk.weibull_terms(logy, eta, alpha)
        b = nb.weibull_terms(logy, eta, alpha)
        assert a[0] == pytest.approx(b[0], rel=1e-13)
        np.testing.assert_allclose(a[1], b[1], rtol=1e-13, atol=1e-14)
        np.testing.assert_allclose(a[2], b[2], rtol=1e-13, atol=1e-14)


def test_locate_points_agree():
    rng = np.random.default_rng(2)
    mesh = triangulate(rng.random((80, 2)))
    pts = rng.uniform(-0.1, 1.1, (500, 2))
    args = _bucket_triangles(mesh.vertices, mesh.triangles)
    t1, b1 = npk.locate_points(pts, mesh.vertices, mesh.triangles, *args, 1e-10)
    t2, b2 = nb.locate_points(pts, mesh.vertices, mesh.triangles, *args, 1e-10)
    np.testing.assert_array_equal(t1 >= 0, t2 >= 0)
    inside = t1 >= 0
    np.testing.assert_allclose(b1[inside], b2[inside], atol=1e-12)


def test_band_selected_inverse_agree():
    rng = np.random.default_rng(3)
    n = 40
    A = np.diag(np.full(n, 4.0)) + np.diag(np.full(n - 1, -1.0), 1) \
        + np.diag(np.full(n - 1, -1.0), -1) + np.diag(rng.uniform(-0.3, 0.3, n - 3), 3)
    A = 0.5 * (A + A.T) + 2 * np.eye(n)
    import scipy.sparse as sp
    fac = BandedCholesky(sp.csr_matrix(A), perm=np.arange(n))
    s1 = npk.band_selected_inverse(fac.lb)
    s2 = nb.band_selected_inverse(fac.lb)
    np.testing.assert_allclose(s1, s2, rtol=1e-12, atol=1e-14)
    inv = np.linalg.inv(A)
    np.testing.assert_allclose(fac.inverse_diagonal(), np.diag(inv), rtol=1e-10)


def test_lower_band_layout():
    import scipy.sparse as sp
    A = sp.csr_matrix(np.array([[4.0, 1, 0], [1, 4, 2], [0, 2, 4]]))
    lb = _to_lower_band(A)
    np.testing.assert_array_equal(lb[0], [4, 4, 4])
    np.testing.assert_array_equal(lb[1, :2], [1, 2])


@pytest.mark.parametrize("flag, expected", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, WINDSPDE_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import windspde; print(windspde.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_backend_constant():
    assert kernels.BACKEND in ("numba", "numpy")
