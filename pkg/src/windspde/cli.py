"""Command-line front end: ingest, mesh, mesh-select, fit, project, simulate."""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .config import RunConfig, load_config, override
from .errors import ConfigError, DataError, NumericalError, WindSpdeError
from .kernels import BACKEND

log = logging.getLogger("windspde")

META_SUFFIX = ".meta.json"


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _versions():
    import numba
    import pandas
    import scipy
    import triangle
    return {"windspde": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "pandas": pandas.__version__, "numba": numba.__version__,
            "triangle": getattr(triangle, "__version__", "unknown"),
            "kernel_backend": BACKEND}


class _Run:
    """Output directory, timers and the metadata record of one command."""

    def __init__(self, name, args, cfg: RunConfig):
        self.name = name
        self.args = args
        self.cfg = cfg
        self.out_dir = cfg["run"]["out_dir"]
        self.outputs = []
        self.extra = {}
        self.wall0 = time.perf_counter()
        self.cpu0 = time.process_time()
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create output directory {self.out_dir}: {exc}") from exc

    def path(self, filename):
        p = os.path.join(self.out_dir, filename)
        self.outputs.append(filename)
        return p

    def finish(self):
        meta = {"command": self.name, "argv": sys.argv[1:], "seed": self.cfg["run"]["seed"],
                "threads": self.cfg["run"]["threads"], "versions": _versions(),
                "config": self.cfg.as_ini(), "outputs": self.outputs,
                "wall_seconds": time.perf_counter() - self.wall0,
                "cpu_seconds": time.process_time() - self.cpu0}
        meta.update(self.extra)
        with open(os.path.join(self.out_dir, self.name + META_SUFFIX), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")


def _load_frame(path, cfg):
    from .ingest import read_prime
    if not os.path.exists(path):
        raise DataError(f"data file {path} does not exist")
    return read_prime(path)


def _subsample(df, n, seed):
    from .ingest import sample
    if n is None or n >= len(df):
        return df
    return sample(df, n, seed)


def _mesh_for(args, cfg, locations):
    from .mesh import Mesh, build_mesh
    if getattr(args, "mesh", None):
        try:
            return Mesh.load(args.mesh)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read mesh {args.mesh}: {exc}") from exc
    return build_mesh(locations, cfg.mesh_spec())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_ingest(args, cfg: RunConfig):
    from .ingest import conglomerate, jitter, write_prime
    d = cfg["data"]
    raw = list(args.raw) if args.raw else list(d["raw"])
    if not raw:
        raise ConfigError("no raw files given (positional arguments or [data] raw)")
    run = _Run("ingest", args, cfg)
    seed = cfg["run"]["seed"]
    df, report = conglomerate(raw, origin=d["origin"], delimiter=d["delimiter"],
                              min_speed=d["min_speed"])
    df = jitter(df, d["jitter_radius"], seed)
    df = _subsample(df, d["sample_size"], seed + 1)
    write_prime(df, run.path("prime.csv"))
    report.write(run.path("skip_report.txt"))
    run.extra["records"] = len(df)
    run.finish()
    print(f"wrote {len(df)} records to {os.path.join(run.out_dir, 'prime.csv')}")


def cmd_mesh(args, cfg: RunConfig):
    from .ingest import station_locations
    from .mesh import build_mesh
    if args.data:
        df = _load_frame(args.data, cfg)
        locs = df[["longitude", "latitude"]].to_numpy(dtype=float)
    else:
        locs = station_locations()
    for k in ("me1", "me2", "of1", "of2", "cutoff"):
        v = getattr(args, k)
        if v is not None:
            cfg = override(cfg, "mesh", k, v)
    run = _Run("mesh", args, cfg)
    mesh = build_mesh(locs, cfg.mesh_spec())
    mesh.save(run.path("mesh.json"))
    text = (f"vertices {mesh.n_vertices}\ntriangles {mesh.n_triangles}\n"
            f"inner_vertices {int(np.sum(mesh.boundary_flag == 0))}\n"
            f"min_angle_deg {mesh.min_angle()!r}\n"
            f"max_edge {float(mesh.edge_lengths().max())!r}\n")
    with open(run.path("mesh_report.txt"), "w") as fh:
        fh.write(text)
    run.extra["vertices"] = mesh.n_vertices
    run.finish()
    print(text, end="")


def cmd_mesh_select(args, cfg: RunConfig):
    from .latent import ModelData
    from .mesh import MeshSpec
    from .selection import REFERENCE_SPECS, format_table, select_mesh, write_table_csv
    specs = cfg.mesh_specs()
    if args.reference or not specs:
        specs = [MeshSpec(*s, min_angle=cfg["mesh"]["min_angle"]) for s in REFERENCE_SPECS]
    if len(specs) < 2:
        raise ConfigError("mesh-select needs at least two mesh specs")
    n = args.subsample if args.subsample is not None else cfg["mesh"]["subsample"]
    run = _Run("mesh-select", args, cfg)
    df = _subsample(_load_frame(args.data, cfg), n, cfg["run"]["seed"])
    data = ModelData.from_frame(df)
    inf = cfg["inference"]
    ekw = dict(strategy=inf["strategy"], tol=inf["tol"], outer_tol=inf["outer_tol"],
               f0=inf["f0"], grid_step=inf["grid_step"], diff_logdens=inf["diff_logdens"],
               threads=1)
    rows, first = select_mesh(data, specs, cfg.model_kwargs(), ekw,
                              parallel=args.parallel or cfg["mesh"]["parallel"],
                              workers=cfg["run"]["threads"])
    # CPU seconds vary between runs, so they live apart from the estimates
    write_table_csv(rows, run.path("mesh_select.csv"), include_cpu=False)
    with open(run.path("mesh_select_timing.csv"), "w") as fh:
        fh.write("mesh,vertices,cpu_seconds\n")
        for r in rows:
            fh.write(f"{r['mesh']},{r['vertices']},{r['cpu_seconds']!r}\n")
    table = format_table(rows)
    with open(run.path("mesh_select.txt"), "w") as fh:
        fh.write(table)
    run.extra["converged_at"] = None if first is None else rows[first]["mesh"]
    run.extra["records"] = len(df)
    run.finish()
    print(table, end="")
    print("converged at", run.extra["converged_at"] or "none")


def cmd_fit(args, cfg: RunConfig):
    from .inference import (explore, write_design, write_estimates, write_hyper_marginals,
                            write_latent_summary, write_spatial_moments)
    from .latent import LatentModel, ModelData, ModelSpec
    run = _Run("fit", args, cfg)
    n = args.sample if args.sample is not None else cfg["data"]["sample_size"]
    df = _subsample(_load_frame(args.data, cfg), n, cfg["run"]["seed"])
    data = ModelData.from_frame(df)
    kw = cfg.model_kwargs()
    mesh = None
    if cfg["model"]["spatial"]:
        mesh = _mesh_for(args, cfg, data.locations)
        mesh.save(run.path("mesh.json"))
    kw["use_spatial"] = mesh is not None
    model = LatentModel(data, ModelSpec.from_data(data, mesh, **kw))
    inf = cfg["inference"]
    cpu0 = time.process_time()
    result = explore(model, strategy=inf["strategy"], tol=inf["tol"],
                     outer_tol=inf["outer_tol"], threads=cfg["run"]["threads"],
                     f0=inf["f0"], grid_step=inf["grid_step"],
                     diff_logdens=inf["diff_logdens"])
    run.extra["inference_cpu_seconds"] = time.process_time() - cpu0
    write_estimates(result, run.path("estimates.csv"))
    write_hyper_marginals(result, run.path("hyper_marginals.csv"))
    write_latent_summary(result, run.path("latent_summary.csv"))
    write_design(result, run.path("design.csv"))
    if mesh is not None:
        write_spatial_moments(result, run.path("spatial_moments.csv"))
    run.extra["records"] = len(df)
    run.extra["hyperparameters"] = list(result.names)
    run.extra["n_lp_evals"] = result.diagnostics["n_lp_evals"]
    run.finish()
    for k in ("alpha", "sigma2_e", "sigma2_x", "kappa", "nominal_range", "tau"):
        if k in result.estimates:
            print(f"{k:<14}{result.estimates[k]: .6g}")


def cmd_project(args, cfg: RunConfig):
    from .inference import read_spatial_moments
    from .mesh import Mesh
    from .project import Lattice, default_lattice, project_moments, write_gnuplot, write_grid
    try:
        mesh = Mesh.load(args.mesh)
        mean, var, edges, ecov = read_spatial_moments(args.moments)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read projection inputs: {exc}") from exc
    if len(mean) != mesh.n_vertices:
        raise DataError(f"moments have {len(mean)} vertices, mesh has {mesh.n_vertices}")
    p = cfg["project"]
    step = args.step if args.step is not None else p["step"]
    lat = default_lattice(mesh, step)
    box = [p[k] for k in ("lon_min", "lon_max", "lat_min", "lat_max")]
    box = [b if b is not None else d for b, d in
           zip(box, (lat.lon_min, lat.lon_max, lat.lat_min, lat.lat_max))]
    try:
        lat = Lattice(*box, step)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    run = _Run("project", args, cfg)
    grid = project_moments(mean, var, edges, ecov, mesh, lat)
    write_grid(grid, run.path("grid.csv"))
    if p["gnuplot"]:
        write_gnuplot(grid, run.path("grid.dat"))
    run.extra["nodes"] = int(len(grid.mean))
    run.extra["masked"] = int(grid.mask.sum())
    run.finish()
    inside = ~grid.mask
    if inside.any():
        print(f"nodes {len(grid.mean)} masked {int(grid.mask.sum())} "
              f"mean [{np.min(grid.mean[inside]):.4g}, {np.max(grid.mean[inside]):.4g}] "
              f"sd [{np.min(grid.sd[inside]):.4g}, {np.max(grid.sd[inside]):.4g}]")


def cmd_simulate(args, cfg: RunConfig):
    from .ingest import write_prime
    from .latent import HyperParams, LatentModel, ModelSpec
    from .simulate import simulate_frame, synthetic_records
    s = cfg["simulate"]
    seed = cfg["run"]["seed"]
    n = args.n if args.n is not None else s["n"]
    run = _Run("simulate", args, cfg)
    df = synthetic_records(n, seed, altitudes=s["altitudes"], start=s["start"],
                           end=s["end"], jitter_radius=cfg["data"]["jitter_radius"])
    kw = cfg.model_kwargs()
    mesh = None
    if cfg["model"]["spatial"]:
        mesh = _mesh_for(args, cfg, df[["longitude", "latitude"]].to_numpy(dtype=float))
        mesh.save(run.path("mesh.json"))
    kw["use_spatial"] = mesh is not None
    kappa = math.sqrt(8.0) / s["range"]
    tau = 1.0 / (math.sqrt(4.0 * math.pi) * kappa * s["sigma"])
    hyper = HyperParams(alpha=s["alpha"], log_kappa=math.log(kappa), log_tau=math.log(tau),
                        rho_f=s["rho_f"], rho_c=s["rho_c"], log_prec_f=math.log(s["prec_f"]),
                        log_prec_c=math.log(s["prec_c"]),
                        log_prec_rw2=math.log(s["prec_rw2"]),
                        log_prec_obs=math.log(s["prec_obs"]))
    fixed = cfg["model"]["fixed"]
    if len(s["beta"]) != len(fixed):
        raise ConfigError(f"[simulate] beta needs {len(fixed)} values, one per fixed effect")

    def factory(data):
        return LatentModel(data, ModelSpec.from_data(data, mesh, **kw))

    frame, truth = simulate_frame(df, factory, hyper, seed + 1, beta=s["beta"])
    if cfg["model"]["family"] == "weibull" and not np.all(frame["wind_speed"] > 0):
        raise NumericalError("simulated speeds underflowed to zero")
    write_prime(frame, run.path("simulated.csv"))
    truth["kappa"] = kappa
    truth["tau"] = tau
    with open(run.path("truth.json"), "w") as fh:
        json.dump(truth, fh, indent=1, sort_keys=True)
        fh.write("\n")
    run.extra["records"] = len(frame)
    run.finish()
    print(f"wrote {len(frame)} simulated records")


COMMANDS = {"ingest": cmd_ingest, "mesh": cmd_mesh, "mesh-select": cmd_mesh_select,
            "fit": cmd_fit, "project": cmd_project, "simulate": cmd_simulate}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="INI run configuration")
    p.add_argument("--seed", type=int, default=d, help="master random seed")
    p.add_argument("--threads", type=int, default=d, help="worker threads")
    p.add_argument("--out-dir", default=d, help="directory for all outputs")
    p.add_argument("-v", "--verbose", action="store_true",
                   default=argparse.SUPPRESS if suppress else False)


def build_parser():
    parser = argparse.ArgumentParser(prog="windspde", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="raw station files to prime.csv")
    p.add_argument("raw", nargs="*", help="raw per-station files")

    p = sub.add_parser("mesh", parents=[common], help="build a mesh")
    p.add_argument("--data", help="prime.csv whose locations seed the mesh "
                                  "(default: station coordinates)")
    for k in ("me1", "me2", "of1", "of2", "cutoff"):
        p.add_argument(f"--{k}", type=float)

    p = sub.add_parser("mesh-select", parents=[common], help="compare candidate meshes")
    p.add_argument("--data", required=True)
    p.add_argument("--subsample", type=int)
    p.add_argument("--reference", action="store_true",
                   help="use the eight reference specs instead of [mesh] specs")
    p.add_argument("--parallel", action="store_true")

    p = sub.add_parser("fit", parents=[common], help="fit the model")
    p.add_argument("--data", required=True)
    p.add_argument("--mesh", help="mesh.json (default: built from [mesh])")
    p.add_argument("--sample", type=int)

    p = sub.add_parser("project", parents=[common], help="project the field to a lattice")
    p.add_argument("--mesh", required=True)
    p.add_argument("--moments", required=True, help="spatial_moments.csv from fit")
    p.add_argument("--step", type=float)

    p = sub.add_parser("simulate", parents=[common], help="draw a synthetic dataset")
    p.add_argument("--mesh", help="mesh.json (default: built from [mesh])")
    p.add_argument("-n", type=int)
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else load_config(text="")
    if args.seed is not None:
        cfg = override(cfg, "run", "seed", args.seed)
    if args.threads is not None:
        cfg = override(cfg, "run", "threads", args.threads)
    if args.out_dir is not None:
        cfg = override(cfg, "run", "out_dir", args.out_dir)
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](args, cfg)
    except WindSpdeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
