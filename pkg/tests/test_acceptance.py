"""Acceptance criteria; each test records PASS/FAIL for the terminal summary."""
import csv
import json
import math
import os
import time

import numpy as np
import pytest
from scipy import integrate

from helpers import alpha_posterior_quadrature, gaussian_exact, gaussian_toy, iid_weibull_model
from windspde import cli
from windspde.inference import (explore, log_posterior_hyper, write_design, write_estimates,
                                write_hyper_marginals, write_latent_summary)
from windspde.ingest import station_locations
from windspde.mesh import Mesh, hex_lattice, triangulate
from windspde.priors import (PcPriorSpec, kld_by_integration, kld_distance_abs_derivative,
                             pc_prior_logpdf)
from windspde.project import read_grid
from windspde.selection import REFERENCE_VERTICES
from windspde.spde import assemble_fem, matern_correlation, precision

C5_INI = """[mesh]
me1 = 0.75
me2 = 1.5
of1 = 0.5
of2 = 2.0
cutoff = 0.1
[simulate]
n = 2000
[run]
seed = 11
"""

# simulation mesh is finer than every candidate; the model is spatial only
C6_INI = """[mesh]
me1 = 0.4
me2 = 0.4
of1 = 0.15
of2 = 0.15
cutoff = 0.4
[model]
spline = false
f_month = false
c_month = false
[simulate]
n = 5000
[run]
seed = 21
"""

# fifth reference mesh's inner settings with a 2 degree outer extension
C7_INI = """[mesh]
me1 = 0.55
me2 = 1.5
of1 = 0.15
of2 = 2.0
cutoff = 0.55
"""

# outputs whose content includes timings
TIMED = ("mesh_select_timing.csv", "mesh_select.txt")


def test_criterion_1_matern_gmrf_agreement(acceptance):
    t0 = time.process_time()
    kappa = 10.0
    mesh = triangulate(hex_lattice(-0.12, 1.12, -0.12, 1.12, 0.034))
    S = np.linalg.inv(precision(assemble_fem(mesh), kappa, 1.0).toarray())
    V = mesh.vertices
    idx = np.flatnonzero(np.all((V >= 0) & (V <= 1), axis=1))
    sd = np.sqrt(np.diag(S))[idx]
    R = S[np.ix_(idx, idx)] / np.outer(sd, sd)
    D = np.linalg.norm(V[idx][:, None] - V[idx][None], axis=-1)
    sel = (D >= 0.05) & (D <= 0.4)
    err = float(np.abs(R[sel] - matern_correlation(D[sel], kappa)).max())
    cpu = time.process_time() - t0
    ok = err < 0.05 and cpu < 60 and 1300 <= mesh.n_vertices <= 1700
    acceptance(1, ok, f"{mesh.n_vertices} vertices, max |error| {err:.4f}, {cpu:.1f} s")
    assert ok


def test_criterion_2_pc_prior(acceptance):
    worst_mass = 0.0
    for theta in (2.0, 5.0, 10.0):
        spec = PcPriorSpec(theta)
        f = lambda a: math.exp(pc_prior_logpdf(a, spec))  # noqa: E731
        pts = [0.2, 0.5, 1.0, 2.0, 5.0]
        total = sum(integrate.quad(f, lo, hi, epsabs=1e-12, limit=200)[0]
                    for lo, hi in zip([0.0] + pts, pts + [np.inf]))
        worst_mass = max(worst_mass, abs(total - 1.0))
    worst_rel = 0.0
    for alpha in (0.5, 1.5, 3.0):
        h = 1e-5 * alpha
        fd = (math.sqrt(2 * kld_by_integration(alpha + h))
              - math.sqrt(2 * kld_by_integration(alpha - h))) / (2 * h)
        worst_rel = max(worst_rel, abs(float(kld_distance_abs_derivative(alpha)) / abs(fd) - 1))
    ok = worst_mass < 1e-3 and worst_rel < 1e-5
    acceptance(2, ok, f"max |mass - 1| {worst_mass:.1e}, max derivative rel error {worst_rel:.1e}")
    assert ok


def test_criterion_3_laplace_exactness(acceptance):
    model = gaussian_toy()
    base = model.initial_theta()
    worst_lp = 0.0
    for shift in (-0.5, 0.0, 0.4):
        theta = base + shift
        lp = log_posterior_hyper(theta, model) - model.log_hyper_prior(theta)
        worst_lp = max(worst_lp, abs(lp - gaussian_exact(model, theta)[0]))
    res = explore(model, fixed=dict(zip(model.names, base)))
    _, mean, cov = gaussian_exact(model, base)
    worst_lat = max(np.abs(res.latent_mean.concat() - mean).max(),
                    np.abs(res.latent_sd.concat() - np.sqrt(np.diag(cov))).max())
    ok = worst_lp < 1e-10 and worst_lat < 1e-8
    acceptance(3, ok, f"log marginal error {worst_lp:.1e}, latent error {worst_lat:.1e}")
    assert ok


def run_c4(out):
    os.makedirs(out, exist_ok=True)
    t0 = time.process_time()
    model = iid_weibull_model(n=500, alpha=1.5, seed=2024)
    res = explore(model, strategy="grid")
    cpu = time.process_time() - t0
    write_hyper_marginals(res, os.path.join(out, "hyper_marginals.csv"))
    write_latent_summary(res, os.path.join(out, "latent_summary.csv"))
    write_design(res, os.path.join(out, "design.csv"))
    write_estimates(res, os.path.join(out, "estimates.csv"))
    return model, res, cpu


def run_c5(out):
    ini = os.path.join(out, "c5.ini")
    os.makedirs(out, exist_ok=True)
    with open(ini, "w") as fh:
        fh.write(C5_INI)
    t0 = time.process_time()
    rc = cli.main(["simulate", "--config", ini, "--out-dir", out])
    if rc == 0:
        rc = cli.main(["fit", "--config", ini, "--out-dir", out, "--data",
                       os.path.join(out, "simulated.csv"), "--mesh",
                       os.path.join(out, "mesh.json")])
    return rc, time.process_time() - t0


def run_c6(out):
    ini = os.path.join(out, "c6.ini")
    os.makedirs(out, exist_ok=True)
    with open(ini, "w") as fh:
        fh.write(C6_INI)
    rc = cli.main(["simulate", "--config", ini, "--out-dir", out])
    if rc == 0:
        rc = cli.main(["mesh-select", "--config", ini, "--out-dir", out, "--reference",
                       "--data", os.path.join(out, "simulated.csv")])
    return rc


@pytest.fixture(scope="module")
def first_runs(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance_run1")


def test_criterion_4_one_dimensional_oracle(acceptance, first_runs):
    model, res, cpu = run_c4(str(first_runs / "c4"))
    v, d = res.natural_marginal("log_alpha")
    grid = np.linspace(1.0, 2.3, 2001)
    q = alpha_posterior_quadrature(model.data.y, grid)
    l1 = float(np.trapezoid(np.abs(np.interp(grid, v, d, left=0.0, right=0.0) - q), grid))
    ok = l1 < 0.01 and cpu < 30
    acceptance(4, ok, f"L1 {l1:.4f}, {cpu:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_5_simulation_recovery(acceptance, first_runs):
    out = str(first_runs / "c5")
    rc, cpu = run_c5(out)
    assert rc == 0
    with open(os.path.join(out, "truth.json")) as fh:
        truth = json.load(fh)["theta"]
    with open(os.path.join(out, "estimates.csv")) as fh:
        est = {r["quantity"]: float(r["posterior_mean"]) for r in csv.DictReader(fh)}
    z = {k: abs(est[k] - t) / est[k + "_sd"] for k, t in truth.items()}
    worst = max(z, key=z.get)
    ok = z[worst] < 3 and cpu < 300
    acceptance(5, ok, f"{len(z)} hyperparameters, max z {z[worst]:.2f} ({worst}), {cpu:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_6_mesh_selection(acceptance, first_runs):
    out = str(first_runs / "c6")
    assert run_c6(out) == 0
    with open(os.path.join(out, "mesh_select.csv")) as fh:
        rows = list(csv.DictReader(fh))
    verts = [int(r["vertices"]) for r in rows]
    ratio = [v / t for v, t in zip(verts, REFERENCE_VERTICES)]
    in_band = all(0.7 <= r <= 1.3 for r in ratio)
    increasing = all(a < b for a, b in zip(verts, verts[1:]))
    flagged = [r["mesh"] for r in rows if r["converged"] == "1"]
    ok = len(rows) == 8 and in_band and increasing and bool(flagged)
    acceptance(6, ok, f"vertices {verts} (ratio to table {min(ratio):.2f}-{max(ratio):.2f}), "
                      f"increasing {increasing}, stable at {flagged[0] if flagged else 'none'}")
    assert len(rows) == 8
    assert increasing
    assert flagged
    assert in_band, "vertex counts outside +-30% of the reference table"


@pytest.mark.slow
def test_criterion_7_field_amplitude(acceptance, tmp_path):
    prime = os.environ.get("WINDSPDE_PRIME_CSV")
    if not prime:
        acceptance(7, "SKIP", "public dataset not available (set WINDSPDE_PRIME_CSV)")
        pytest.skip("public dataset not available")
    out = str(tmp_path)
    ini = tmp_path / "c7.ini"
    ini.write_text(C7_INI)
    assert cli.main(["fit", "--config", str(ini), "--out-dir", out, "--data", prime,
                     "--sample", "5000"]) == 0
    # lattice over the whole mesh so nodes more than 3 degrees from a station exist
    V = Mesh.load(os.path.join(out, "mesh.json")).vertices
    lo_v, hi_v = V.min(axis=0).tolist(), V.max(axis=0).tolist()
    ini.write_text(C7_INI + f"[project]\nlon_min = {lo_v[0]!r}\nlon_max = {hi_v[0]!r}\n"
                            f"lat_min = {lo_v[1]!r}\nlat_max = {hi_v[1]!r}\n")
    assert cli.main(["project", "--config", str(ini), "--out-dir", out,
                     "--mesh", os.path.join(out, "mesh.json"),
                     "--moments", os.path.join(out, "spatial_moments.csv")]) == 0
    g = read_grid(os.path.join(out, "grid.csv"))
    inside = g["masked"] == 0
    lo, hi = float(np.min(g["mean"][inside])), float(np.max(g["mean"][inside]))
    nodes = np.column_stack([g["lon"], g["lat"]])[inside]
    st = station_locations()
    dist = np.min(np.linalg.norm(nodes[:, None] - st[None], axis=-1), axis=1)
    sd = g["sd"][inside]
    near, far = sd[dist <= 0.5], sd[dist > 3.0]
    ok = bool(-0.5 <= lo and hi <= 0.5 and near.size and far.size
              and near.mean() < far.mean())
    acceptance(7, ok, f"mean range [{lo:.3f}, {hi:.3f}], sd near {near.mean():.3f} "
                      f"far {far.mean():.3f}")
    assert ok


def _files(d):
    out = {}
    for root, _, names in os.walk(d):
        for n in names:
            if n.endswith(cli.META_SUFFIX) or n in TIMED:
                continue
            p = os.path.join(root, n)
            out[os.path.relpath(p, d)] = p
    return out


@pytest.mark.slow
def test_criterion_8_determinism(acceptance, first_runs, tmp_path):
    second = tmp_path / "run2"
    for name, fn in (("c4", run_c4), ("c5", run_c5), ("c6", run_c6)):
        if not (first_runs / name).is_dir():  # criterion run on its own
            fn(str(first_runs / name))
        fn(str(second / name))
    a, b = _files(str(first_runs)), _files(str(second))
    differ = sorted(k for k in a if k not in b or open(a[k], "rb").read() != open(b[k], "rb").read())
    ok = bool(a) and set(a) == set(b) and not differ
    acceptance(8, ok, f"{len(a)} files compared, {len(differ)} differ {differ[:3]}")
    assert ok
