"""Mesh selection: fit one model per candidate mesh and compare the field estimates."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor

from .errors import WindSpdeError
from .inference import explore, fit_report
from .latent import LatentModel, ModelSpec
from .mesh import MeshSpec, build_mesh

log = logging.getLogger(__name__)

# reference candidate meshes, coarse to fine: (me1, me2, of1, of2, cutoff)
REFERENCE_SPECS = (
    (1.0, 1.0, 0.30, 0.30, 0.95),
    (0.90, 0.90, 0.20, 0.20, 0.90),
    (0.75, 0.75, 0.15, 0.15, 0.75),
    (0.725, 0.725, 0.15, 0.15, 0.725),
    (0.55, 0.55, 0.15, 0.15, 0.55),
    (0.50, 0.50, 0.15, 0.15, 0.50),
    (0.45, 0.45, 0.15, 0.15, 0.45),
    (0.40, 0.40, 0.15, 0.15, 0.40),
)
REFERENCE_VERTICES = (762, 981, 1358, 1420, 2194, 2561, 3136, 4009)

FIELD_PARAMS = ("sigma2_x", "kappa", "nominal_range", "tau")
COLUMNS = ("mesh", "me1", "me2", "of1", "of2", "cutoff", "vertices", "cpu_seconds",
           "sigma2_e", "sigma2_x", "kappa", "nominal_range", "tau", "max_rel_change",
           "converged", "status", "error")
CONVERGENCE_TOL = 0.10


def label(i):
    return "Mesh-" + chr(ord("A") + i) if i < 26 else f"Mesh-{i + 1}"


def fit_one(data, spec: MeshSpec, model_kwargs=None, explore_kwargs=None):
    """One table row; failures are recorded rather than raised."""
    row = {"me1": spec.me1, "me2": spec.me2, "of1": spec.of1, "of2": spec.of2,
           "cutoff": spec.cutoff, "vertices": 0, "cpu_seconds": math.nan,
           "status": "ok", "error": ""}
    for k in ("sigma2_e",) + FIELD_PARAMS:
        row[k] = math.nan
    try:
        mesh = build_mesh(data.locations, spec)
        row["vertices"] = mesh.n_vertices
        kw = dict(model_kwargs or {})
        kw["use_spatial"] = True
        model = LatentModel(data, ModelSpec.from_data(data, mesh, **kw))
        cpu0 = time.process_time()
        result = explore(model, **(explore_kwargs or {}))
        cpu = time.process_time() - cpu0
        rep = fit_report(result, mesh, cpu)
        for k in ("sigma2_e",) + FIELD_PARAMS:
            row[k] = rep[k]
        row["cpu_seconds"] = cpu
    except (WindSpdeError, ValueError, ArithmeticError) as exc:
        log.warning("mesh %s failed: %s", spec, exc)
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _job(args):
    return fit_one(*args)


def flag_convergence(rows, tol=CONVERGENCE_TOL):
    """Relative change of the field parameters between successive rows.

    Sets ``max_rel_change`` on each row and ``converged`` on the first row
    whose change from its predecessor is below ``tol`` for every parameter.
    Returns the index of that row or ``None``.
    """
    first = None
    for i, row in enumerate(rows):
        row["max_rel_change"] = math.nan
        row["converged"] = False
        if i == 0 or row["status"] != "ok" or rows[i - 1]["status"] != "ok":
            continue
        prev = rows[i - 1]
        ch = [abs(row[k] - prev[k]) / abs(prev[k]) for k in FIELD_PARAMS if prev[k] != 0]
        row["max_rel_change"] = max(ch) if ch else math.nan
        if first is None and ch and max(ch) < tol:
            first = i
            row["converged"] = True
    return first


def select_mesh(data, specs, model_kwargs=None, explore_kwargs=None, parallel=False,
                workers=1, tol=CONVERGENCE_TOL):
    """Fit every spec in order; returns ``(rows, index of the converged spec)``."""
    specs = list(specs)
    if len(specs) < 2:
        raise ValueError("mesh selection needs at least two mesh specs")
    jobs = [(data, s, model_kwargs, explore_kwargs) for s in specs]
    if parallel and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_job, jobs))
    else:
        rows = [_job(j) for j in jobs]
    for i, row in enumerate(rows):
        row["mesh"] = label(i)
    return rows, flag_convergence(rows, tol)


def _cell(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table_csv(rows, path, include_cpu=True):
    cols = [c for c in COLUMNS if include_cpu or c != "cpu_seconds"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([_cell(r[c]) for c in cols])


def format_table(rows):
    """Human-readable table: mesh settings, then field estimates."""
    head = (f"{'mesh':<8}{'me1':>7}{'me2':>7}{'of1':>6}{'of2':>6}{'cu':>7}{'verts':>7}"
            f"{'cpu_s':>9}{'s2_x':>10}{'kappa':>9}{'range':>9}{'tau':>9}  flag")
    lines = [head, "-" * len(head)]
    for r in rows:
        if r["status"] != "ok":
            lines.append(f"{r['mesh']:<8}{r['me1']:>7.3g}{r['me2']:>7.3g}{r['of1']:>6.2f}"
                         f"{r['of2']:>6.2f}{r['cutoff']:>7.3g}{r['vertices']:>7d}  "
                         f"FAILED {r['error']}")
            continue
        lines.append(f"{r['mesh']:<8}{r['me1']:>7.3g}{r['me2']:>7.3g}{r['of1']:>6.2f}"
                     f"{r['of2']:>6.2f}{r['cutoff']:>7.3g}{r['vertices']:>7d}"
                     f"{r['cpu_seconds']:>9.2f}{r['sigma2_x']:>10.4f}{r['kappa']:>9.4f}"
                     f"{r['nominal_range']:>9.4f}{r['tau']:>9.4f}"
                     f"  {'converged' if r['converged'] else ''}")
    return "\n".join(lines) + "\n"
