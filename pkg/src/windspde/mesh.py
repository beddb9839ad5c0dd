"""Refined Delaunay meshes over a buffered convex domain, and projectors.

The domain is the convex hull of the (cutoff-merged) locations, dilated
twice: by ``of1`` for the inner zone and by a further ``of2`` for the outer
extension. Both rings are constrained segments of a quality conforming
Delaunay triangulation (Shewchuk's Triangle), refined until the edge-length
and minimum-angle bounds hold.

Coordinates are treated as planar degrees.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import triangle
from scipy.spatial import ConvexHull, cKDTree

from . import kernels
from .errors import DataError, NumericalError

log = logging.getLogger(__name__)

ARC_STEP_DEG = 20.0


@dataclass(frozen=True)
class MeshSpec:
    me1: float
    me2: float
    of1: float
    of2: float
    cutoff: float
    min_angle: float = 21.0
    max_iter: int = 200

    def __post_init__(self):
        for name in ("me1", "me2", "of1", "of2", "cutoff"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"mesh spec {name} must be positive, got {v!r}")
        if not 0.0 <= self.min_angle < 34.0:
            raise ValueError("min_angle must lie in [0, 34) degrees")
        if self.me1 > self.me2:
            log.warning("me1 (%g) > me2 (%g): inner zone coarser than the extension",
                        self.me1, self.me2)

    def as_dict(self):
        return {"me1": self.me1, "me2": self.me2, "of1": self.of1, "of2": self.of2,
                "cutoff": self.cutoff, "min_angle": self.min_angle,
                "max_iter": self.max_iter}


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_flag: np.ndarray
    inner_boundary: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    outer_boundary: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    spec: MeshSpec | None = None

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted ``(i, j)`` pairs, ``i < j``."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    def min_angle(self) -> float:
        return float(np.degrees(_triangle_angles(self.vertices[self.triangles]).min()))

    def inner_bbox(self):
        """(xmin, xmax, ymin, ymax) of the inner zone."""
        src = self.inner_boundary if len(self.inner_boundary) else \
            self.vertices[self.boundary_flag == 0]
        if len(src) == 0:
            src = self.vertices
        return (float(src[:, 0].min()), float(src[:, 0].max()),
                float(src[:, 1].min()), float(src[:, 1].max()))

    def to_dict(self):
        return {
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_flag": self.boundary_flag.tolist(),
            "inner_boundary": self.inner_boundary.tolist(),
            "outer_boundary": self.outer_boundary.tolist(),
            "spec": None if self.spec is None else self.spec.as_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        spec = d.get("spec")
        return cls(
            vertices=np.asarray(d["vertices"], dtype=float).reshape(-1, 2),
            triangles=np.asarray(d["triangles"], dtype=np.int64).reshape(-1, 3),
            boundary_flag=np.asarray(d["boundary_flag"], dtype=np.int64),
            inner_boundary=np.asarray(d.get("inner_boundary", []), dtype=float).reshape(-1, 2),
            outer_boundary=np.asarray(d.get("outer_boundary", []), dtype=float).reshape(-1, 2),
            spec=None if spec is None else MeshSpec(**spec),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class Projector:
    """Barycentric interpolation matrix plus the mask of unlocated points."""
    matrix: sp.csr_matrix
    outside: np.ndarray

    @property
    def n_outside(self) -> int:
        return int(self.outside.sum())


# ---------------------------------------------------------------------------
# geometry helpers
# ---------------------------------------------------------------------------

def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _triangle_angles(p):
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        A = np.arccos(np.clip((b * b + c * c - a * a) / (2 * b * c), -1, 1))
        B = np.arccos(np.clip((a * a + c * c - b * b) / (2 * a * c), -1, 1))
    return np.stack([A, B, np.pi - A - B], axis=1)


def polygon_area(poly) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def inside_convex(points, poly, tol=1e-12) -> np.ndarray:
    """Points inside or on a CCW convex polygon."""
    points = np.atleast_2d(points)
    e = np.roll(poly, -1, axis=0) - poly
    scale = max(float(np.ptp(poly)), 1.0)
    cr = (e[None, :, 0] * (points[:, None, 1] - poly[None, :, 1])
          - e[None, :, 1] * (points[:, None, 0] - poly[None, :, 0]))
    return np.all(cr >= -tol * scale * np.linalg.norm(e, axis=1)[None, :], axis=1)


def merge_cutoff(points, cutoff):
    """Greedy merge: scanning in lexicographic order, drop points within ``cutoff`` of a kept one."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return pts
    pts = np.unique(pts, axis=0)  # lexicographic
    if cutoff <= 0 or len(pts) == 1:
        return pts
    tree = cKDTree(pts)
    removed = np.zeros(len(pts), dtype=bool)
    keep = []
    for i in range(len(pts)):
        if removed[i]:
            continue
        keep.append(i)
        for j in tree.query_ball_point(pts[i], cutoff * (1 - 1e-12)):
            removed[j] = True
    return pts[np.asarray(keep)]


def dilated_hull(points, offset, max_edge, arc_step_deg=ARC_STEP_DEG):
    """CCW polygon approximating the convex hull of ``points`` dilated by ``offset``.

    Corners become circular arcs sampled at most ``arc_step_deg`` apart, and
    every boundary segment is subdivided to length ``<= max_edge``.
    """
    hull = ConvexHull(points)
    h = points[hull.vertices]  # CCW in 2-D
    k = len(h)
    e = np.roll(h, -1, axis=0) - h
    normals = np.stack([e[:, 1], -e[:, 0]], axis=1) / np.linalg.norm(e, axis=1)[:, None]
    ring = []
    for i in range(k):
        a0 = math.atan2(*normals[i - 1][::-1])
        a1 = math.atan2(*normals[i][::-1])
        span = (a1 - a0) % (2 * math.pi)
        nseg = max(1, math.ceil(math.degrees(span) / arc_step_deg - 1e-9))
        for s in range(nseg + 1):
            ang = a0 + span * s / nseg
            ring.append(h[i] + offset * np.array([math.cos(ang), math.sin(ang)]))
    ring = np.asarray(ring)
    # drop consecutive duplicates
    nxt = np.roll(ring, -1, axis=0)
    ring = ring[np.linalg.norm(nxt - ring, axis=1) > 1e-12 * max(offset, 1.0)]
    out = []
    for i in range(len(ring)):
        a, b = ring[i], ring[(i + 1) % len(ring)]
        n = max(1, math.ceil(np.linalg.norm(b - a) / max_edge - 1e-12))
        for s in range(n):
            out.append(a + (b - a) * (s / n))
    return np.asarray(out)


def _check_locations(pts):
    if len(pts) < 3:
        raise DataError(f"need at least 3 distinct locations after cutoff merging, have {len(pts)}")
    c = pts - pts.mean(axis=0)
    sv = np.linalg.svd(c, compute_uv=False)
    if sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise DataError("all locations are collinear; cannot triangulate")


def _finalize(V, T, flags, inner, outer, spec):
    order = np.lexsort((V[:, 1], V[:, 0]))
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    V = V[order]
    flags = flags[order]
    T = inv[T]
    p = V[T]
    neg = _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]) < 0
    T[neg] = T[neg][:, [0, 2, 1]]
    # rotate so the smallest index comes first, keeping orientation
    r = np.argmin(T, axis=1)
    T = np.stack([T[np.arange(len(T)), (r + s) % 3] for s in range(3)], axis=1)
    T = T[np.lexsort((T[:, 2], T[:, 1], T[:, 0]))]
    return Mesh(V, T.astype(np.int64), flags.astype(np.int64), inner, outer, spec)


def _triangle(tri_in, opts):
    try:
        out = triangle.triangulate(tri_in, opts)
    except Exception as exc:  # the C library reports failures as generic errors
        raise NumericalError(f"triangulation failed: {exc}") from exc
    if "triangles" not in out or len(out["triangles"]) == 0:
        raise DataError("triangulation produced no triangles")
    return out


def triangulate(points) -> Mesh:
    """Plain Delaunay triangulation of ``points`` (no buffer, no refinement)."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    _check_locations(pts)
    out = _triangle({"vertices": pts}, "Q")
    hull = pts[ConvexHull(pts).vertices]
    return _finalize(out["vertices"], out["triangles"].astype(np.int64),
                     np.zeros(len(out["vertices"]), dtype=np.int64), hull, hull, None)


def _ring_segments(start, n):
    i = np.arange(n)
    return np.stack([start + i, start + (i + 1) % n], axis=1)


def _zone_flags(V, inner):
    return (~inside_convex(V, inner, tol=1e-9)).astype(np.int64)


def _edge_violations(V, T, flags, spec):
    e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
    e.sort(axis=1)
    e = np.unique(e, axis=0)
    length = np.linalg.norm(V[e[:, 1]] - V[e[:, 0]], axis=1)
    limit = np.where(flags[e[:, 0]] | flags[e[:, 1]], spec.me2, spec.me1)
    return e[length > limit * (1 + 1e-12)]


def build_mesh(locations, spec: MeshSpec) -> Mesh:
    """Refined Delaunay mesh of ``locations`` with a two-zone buffer.

    The inner and outer dilated hulls enter as constrained segments; the
    inner zone gets an area bound from ``me1`` and the extension from
    ``me2``, with minimum angle ``spec.min_angle``. Area bounds do not imply
    edge bounds, so any edge still too long is split at its midpoint and the
    quality triangulation is redone until none remain.
    """
    pts = merge_cutoff(locations, spec.cutoff)
    if len(pts) < 3:
        raise DataError(
            f"only {len(pts)} location(s) remain after merging with cutoff {spec.cutoff}; "
            "the cutoff is at least the domain diameter")
    _check_locations(pts)
    inner = dilated_hull(pts, spec.of1, spec.me1)
    outer = dilated_hull(pts, spec.of1 + spec.of2, spec.me2)
    n0, n1 = len(pts), len(inner)
    V = np.concatenate([pts, inner, outer])
    S = np.concatenate([_ring_segments(n0, n1), _ring_segments(n0 + n1, len(outer))])
    centre = pts.mean(axis=0)
    # a point just outside the inner ring, inside the outer one
    k = int(np.argmax(np.linalg.norm(inner - centre, axis=1)))
    d = inner[k] - centre
    probe = inner[k] + d / np.linalg.norm(d) * 0.5 * spec.of2
    area1 = math.sqrt(3.0) / 4.0 * spec.me1 ** 2
    area2 = math.sqrt(3.0) / 4.0 * spec.me2 ** 2
    regions = np.array([[centre[0], centre[1], 0.0, area1],
                        [probe[0], probe[1], 1.0, area2]])
    opts = f"pq{spec.min_angle:.6g}aAQ"
    for _ in range(spec.max_iter):
        out = _triangle({"vertices": V, "segments": S, "regions": regions}, opts)
        V = out["vertices"]
        T = out["triangles"].astype(np.int64)
        S = out["segments"]
        flags = _zone_flags(V, inner)
        bad = _edge_violations(V, T, flags, spec)
        if bad.size == 0:
            break
        mids = 0.5 * (V[bad[:, 0]] + V[bad[:, 1]])
        V, S = _split_segments(V, S, bad, mids)
    else:
        raise NumericalError(f"mesh refinement did not finish in {spec.max_iter} rounds")
    mesh = _finalize(V, T, flags, inner, outer, spec)
    log.info("mesh: %d vertices, %d triangles", mesh.n_vertices, mesh.n_triangles)
    return mesh


def _split_segments(V, S, edges, mids):
    """Append midpoints; constrained segments among ``edges`` are split in two."""
    n = len(V)
    V = np.concatenate([V, mids])
    key = {(min(a, b), max(a, b)): n + i for i, (a, b) in enumerate(edges.tolist())}
    new = []
    for a, b in S.tolist():
        m = key.get((min(a, b), max(a, b)))
        if m is None:
            new.append((a, b))
        else:
            new.extend([(a, m), (m, b)])
    return V, np.asarray(new, dtype=np.int64)


# ---------------------------------------------------------------------------
# projector
# ---------------------------------------------------------------------------

def _bucket_triangles(V, T):
    p = V[T]
    lo = p.min(axis=1)
    hi = p.max(axis=1)
    xmin, ymin = V.min(axis=0)
    xmax, ymax = V.max(axis=0)
    span = max(xmax - xmin, ymax - ymin, 1e-300)
    cell = max(math.sqrt((xmax - xmin) * (ymax - ymin) / max(len(T), 1)), span * 1e-6)
    origin = np.array([xmin - 1e-9 * span, ymin - 1e-9 * span])
    nx = int(math.floor((xmax - origin[0]) / cell)) + 2
    ny = int(math.floor((ymax - origin[1]) / cell)) + 2
    ix0 = np.floor((lo[:, 0] - origin[0]) / cell).astype(np.int64)
    ix1 = np.floor((hi[:, 0] - origin[0]) / cell).astype(np.int64)
    iy0 = np.floor((lo[:, 1] - origin[1]) / cell).astype(np.int64)
    iy1 = np.floor((hi[:, 1] - origin[1]) / cell).astype(np.int64)
    cx = ix1 - ix0 + 1
    cy = iy1 - iy0 + 1
    cnt = cx * cy
    tri_id = np.repeat(np.arange(len(T)), cnt)
    k = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    gx = ix0[tri_id] + k // cy[tri_id]
    gy = iy0[tri_id] + k % cy[tri_id]
    cid = gx * ny + gy
    order = np.lexsort((tri_id, cid))
    cell_tris = tri_id[order]
    cell_start = np.zeros(nx * ny + 1, dtype=np.int64)
    np.add.at(cell_start, cid + 1, 1)
    cell_start = np.cumsum(cell_start)
    return origin, cell, (nx, ny), cell_start, cell_tris


def projector(mesh: Mesh, locations, eps=1e-10) -> Projector:
    """Sparse barycentric projector from mesh vertices to ``locations``."""
    loc = np.asarray(locations, dtype=float).reshape(-1, 2)
    n = loc.shape[0]
    V = mesh.vertices
    T = mesh.triangles
    if n == 0:
        return Projector(sp.csr_matrix((0, mesh.n_vertices)), np.zeros(0, dtype=bool))
    origin, cell, shape, cell_start, cell_tris = _bucket_triangles(V, T)
    tri_of, bary = kernels.locate_points(loc, V, T, origin, cell, shape,
                                         cell_start, cell_tris, eps)
    outside = tri_of < 0
    bary = np.where(bary < 0, 0.0, bary)
    s = bary.sum(axis=1)
    bary[~outside] /= s[~outside, None]
    rows = np.repeat(np.arange(n), 3)
    cols = T[np.maximum(tri_of, 0)].ravel()
    vals = np.where(outside[:, None], 0.0, bary).ravel()
    keep = vals != 0.0
    A = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, mesh.n_vertices))
    A.sum_duplicates()
    A.sort_indices()
    if outside.any():
        log.warning("%d of %d locations lie outside the mesh", int(outside.sum()), n)
    return Projector(A, outside)


def hex_lattice(xmin, xmax, ymin, ymax, h):
    """Points of a triangular (hexagonal-packing) lattice with spacing ``h``."""
    if not h > 0:
        raise ValueError("lattice spacing must be positive")
    dy = h * math.sqrt(3.0) / 2.0
    rows = []
    for k, y in enumerate(np.arange(ymin, ymax + 1e-9 * h, dy)):
        x = np.arange(xmin + (0.5 * h if k % 2 else 0.0), xmax + 1e-9 * h, h)
        rows.append(np.column_stack([x, np.full_like(x, y)]))
    return np.concatenate(rows)
