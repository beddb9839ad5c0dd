import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windspde.errors import DataError
from windspde.ingest import station_locations
from windspde.mesh import (Mesh, MeshSpec, build_mesh, dilated_hull, hex_lattice,
                           merge_cutoff, polygon_area, projector, triangulate)
from windspde.selection import REFERENCE_SPECS

UNIT = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def test_four_corners_two_triangles():
    m = triangulate(UNIT)
    assert m.n_vertices == 4 and m.n_triangles == 2
    assert np.all(m.areas() > 0)
    assert m.areas().sum() == pytest.approx(1.0, abs=1e-14)


def test_duplicates_merged():
    pts = np.array([[0.0, 0.0], [0.0, 0.0], [1e-4, 0.0], [1.0, 0.0], [0.0, 1.0]])
    merged = merge_cutoff(pts, 0.01)
    assert len(merged) == 3


def test_collinear_rejected():
    pts = np.column_stack([np.linspace(0, 1, 6), np.linspace(0, 2, 6)])
    with pytest.raises(DataError, match="collinear"):
        build_mesh(pts, MeshSpec(0.5, 0.5, 0.1, 0.1, 0.01))


def test_cutoff_beyond_diameter_rejected():
    with pytest.raises(DataError, match="cutoff"):
        build_mesh(UNIT, MeshSpec(0.5, 0.5, 0.1, 0.1, 5.0))


def test_spec_validation():
    with pytest.raises(ValueError):
        MeshSpec(0.0, 1.0, 0.1, 0.1, 0.1)


@pytest.fixture(scope="module")
def station_mesh():
    return build_mesh(station_locations(), MeshSpec(0.55, 0.55, 0.15, 0.15, 0.55))


def _check_quality(mesh, spec):
    assert np.all(mesh.areas() > 0)
    assert mesh.min_angle() >= spec.min_angle - 1e-6
    e = mesh.edges()
    L = mesh.edge_lengths()
    inner = (mesh.boundary_flag[e[:, 0]] == 0) & (mesh.boundary_flag[e[:, 1]] == 0)
    assert np.all(L[inner] <= spec.me1 * (1 + 1e-9))
    assert np.all(L <= max(spec.me1, spec.me2) * (1 + 1e-9))


def test_station_mesh_quality(station_mesh):
    _check_quality(station_mesh, station_mesh.spec)


def test_area_matches_buffered_region(station_mesh):
    area = polygon_area(station_mesh.outer_boundary)
    assert station_mesh.areas().sum() == pytest.approx(area, rel=1e-8)


def test_edge_conforming(station_mesh):
    # every interior edge is shared by exactly two triangles, boundary edges by one
    t = station_mesh.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    e.sort(axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    assert set(counts) <= {1, 2}
    # boundary edges form one closed loop tracing the outer ring
    bnd = np.unique(e, axis=0)[counts == 1]
    deg = np.bincount(bnd.ravel(), minlength=station_mesh.n_vertices)
    assert set(deg[deg > 0]) == {2}
    V = station_mesh.vertices
    ring = station_mesh.outer_boundary
    perim = np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1).sum()
    blen = np.linalg.norm(V[bnd[:, 0]] - V[bnd[:, 1]], axis=1).sum()
    assert blen == pytest.approx(perim, rel=1e-10)


def test_two_zone_mesh():
    spec = MeshSpec(0.3, 0.8, 0.2, 1.0, 0.05)
    m = build_mesh(station_locations()[:5] / 5.0, spec)
    _check_quality(m, spec)
    assert set(np.unique(m.boundary_flag)) == {0, 1}


def test_reference_specs_monotone_vertex_counts():
    counts = [build_mesh(station_locations(), MeshSpec(*s)).n_vertices for s in REFERENCE_SPECS]
    assert all(b > a for a, b in zip(counts, counts[1:]))


def test_deterministic_and_serialisable(tmp_path, station_mesh):
    again = build_mesh(station_locations(), station_mesh.spec)
    np.testing.assert_array_equal(again.vertices, station_mesh.vertices)
    np.testing.assert_array_equal(again.triangles, station_mesh.triangles)
    p = tmp_path / "m.json"
    station_mesh.save(p)
    back = Mesh.load(p)
    np.testing.assert_array_equal(back.vertices, station_mesh.vertices)
    np.testing.assert_array_equal(back.triangles, station_mesh.triangles)
    np.testing.assert_array_equal(back.boundary_flag, station_mesh.boundary_flag)
    assert back.spec == station_mesh.spec


def test_dilated_hull_contains_offset():
    ring = dilated_hull(UNIT, 0.5, 0.2)
    # area of the square dilated by r, approximated by a polygon inside the true shape
    exact = 1.0 + 4 * 0.5 + np.pi * 0.25
    assert exact * 0.99 < polygon_area(ring) <= exact + 1e-12
    seg = np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1)
    assert seg.max() <= 0.2 + 1e-12


def test_projector_vertex_and_centroid(station_mesh):
    V, T = station_mesh.vertices, station_mesh.triangles
    P = projector(station_mesh, V[[3, 10]]).matrix.toarray()
    assert P[0, 3] == 1.0 and np.count_nonzero(P[0]) == 1
    assert P[1, 10] == 1.0 and np.count_nonzero(P[1]) == 1
    c = V[T[5]].mean(axis=0)
    row = projector(station_mesh, c[None, :]).matrix.toarray()[0]
    np.testing.assert_allclose(row[T[5]], 1 / 3, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_projector_reproduces_coordinates(seed):
    mesh = triangulate(hex_lattice(0, 1, 0, 1, 0.2))
    rng = np.random.default_rng(seed)
    k = rng.integers(mesh.n_triangles)
    w = rng.dirichlet(np.ones(3))
    p = w @ mesh.vertices[mesh.triangles[k]]
    A = projector(mesh, p[None, :]).matrix
    assert A.nnz <= 3
    assert A.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(A @ mesh.vertices, p[None, :], atol=1e-12)


def test_projector_outside_rows(caplog):
    mesh = triangulate(UNIT)
    pr = projector(mesh, np.array([[0.5, 0.5], [2.0, 2.0]]))
    assert pr.n_outside == 1
    A = pr.matrix.toarray()
    assert A[1].sum() == 0.0 and A[0].sum() == pytest.approx(1.0, abs=1e-12)
    assert "outside" in caplog.text
