"""Projection of the spatial posterior onto a regular lon/lat lattice."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .gmrf import BandedCholesky
from .mesh import Mesh, projector

MASKED = float("nan")


@dataclass(frozen=True)
class Lattice:
    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("lattice step must be positive")
        if self.lon_max < self.lon_min or self.lat_max < self.lat_min:
            raise ValueError("empty lattice: max below min")

    @property
    def shape(self):
        """(n_lat, n_lon)."""
        n_lon = int(math.floor((self.lon_max - self.lon_min) / self.step + 1e-9)) + 1
        n_lat = int(math.floor((self.lat_max - self.lat_min) / self.step + 1e-9)) + 1
        return n_lat, n_lon

    def nodes(self):
        """Node coordinates, row-major from the south-west corner."""
        n_lat, n_lon = self.shape
        lon = self.lon_min + self.step * np.arange(n_lon)
        lat = self.lat_min + self.step * np.arange(n_lat)
        LON, LAT = np.meshgrid(lon, lat)
        return np.column_stack([LON.ravel(), LAT.ravel()])


def default_lattice(mesh: Mesh, step=0.1) -> Lattice:
    xmin, xmax, ymin, ymax = mesh.inner_bbox()
    return Lattice(xmin, xmax, ymin, ymax, step)


@dataclass(frozen=True, eq=False)
class FieldGrid:
    lattice: Lattice
    mean: np.ndarray
    sd: np.ndarray
    mask: np.ndarray  # True where the node lies outside the mesh


def _covariance_matrix(n, var, edges, ecov):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([np.arange(n), edges[:, 0], edges[:, 1]])
    cols = np.concatenate([np.arange(n), edges[:, 1], edges[:, 0]])
    vals = np.concatenate([var, ecov, ecov])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def project_moments(mean, var, edges, ecov, mesh: Mesh, lattice: Lattice) -> FieldGrid:
    """Grid mean ``A mu`` and sd from vertex variances and edge covariances."""
    nodes = lattice.nodes()
    if len(nodes) == 0:
        raise ValueError("empty lattice")
    proj = projector(mesh, nodes)
    A = proj.matrix
    C = _covariance_matrix(mesh.n_vertices, np.asarray(var), edges, np.asarray(ecov))
    gm = A @ np.asarray(mean)
    gv = np.asarray((A @ C).multiply(A).sum(axis=1)).ravel()
    gsd = np.sqrt(np.maximum(gv, 0.0))
    mask = proj.outside
    gm = np.where(mask, MASKED, gm)
    gsd = np.where(mask, MASKED, gsd)
    return FieldGrid(lattice, gm, gsd, mask)


def project_field(result, mesh: Mesh, lattice: Lattice | None = None) -> FieldGrid:
    """Posterior mean and sd of the spatial effect on ``lattice``."""
    if result.latent_mean.spatial.size == 0:
        raise ValueError("result has no spatial block")
    if lattice is None:
        lattice = default_lattice(mesh)
    return project_moments(result.latent_mean.spatial, result.spatial_var,
                           result.spatial_edges, result.spatial_edge_cov, mesh, lattice)


def prior_moments(Q, mesh: Mesh, perm=None):
    """Zero mean, marginal variances and edge covariances of the GMRF prior."""
    fac = BandedCholesky(Q, perm=perm)
    n = mesh.n_vertices
    idx = np.arange(n)
    edges = mesh.edges()
    return (np.zeros(n), fac.inverse_entries(idx, idx), edges,
            fac.inverse_entries(edges[:, 0], edges[:, 1]))


def _fmt(v):
    return "nan" if not np.isfinite(v) else repr(float(v))


def write_grid(grid: FieldGrid, path):
    nodes = grid.lattice.nodes()
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["lon", "lat", "mean", "sd", "masked"])
        for (x, y), m, s, k in zip(nodes, grid.mean, grid.sd, grid.mask):
            wr.writerow([repr(float(x)), repr(float(y)), _fmt(m), _fmt(s), int(k)])


def read_grid(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data


def write_gnuplot(grid: FieldGrid, path):
    """Text grid for ``splot ... with pm3d``: one block per latitude row."""
    n_lat, n_lon = grid.lattice.shape
    nodes = grid.lattice.nodes()
    with open(path, "w") as fh:
        fh.write("# lon lat mean sd\n")
        for r in range(n_lat):
            for c in range(n_lon):
                k = r * n_lon + c
                fh.write(f"{float(nodes[k, 0])!r} {float(nodes[k, 1])!r} {_fmt(grid.mean[k])} "
                         f"{_fmt(grid.sd[k])}\n")
            fh.write("\n")
