"""Time the numba and pure-numpy kernel paths on representative inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]
"""
import argparse
import json
import timeit

import numpy as np

from windspde import _numba_kernels as nb
from windspde import _numpy_kernels as npk
from windspde.gmrf import BandedCholesky
from windspde.ingest import station_locations
from windspde.mesh import MeshSpec, _bucket_triangles, build_mesh
from windspde.spde import assemble_fem, precision


def cases():
    rng = np.random.default_rng(0)
    n = 50_000
    logy = rng.normal(1.5, 0.6, n)
    eta = rng.normal(1.5, 0.3, n)
    mesh = build_mesh(station_locations(), MeshSpec(0.55, 0.55, 0.15, 0.15, 0.55))
    lo, hi = mesh.vertices.min(0), mesh.vertices.max(0)
    pts = rng.uniform(lo, hi, (20_000, 2))
    grid = _bucket_triangles(mesh.vertices, mesh.triangles)
    ops = assemble_fem(mesh)
    lb = BandedCholesky(precision(ops, 1.5, 0.5), perm=ops.perm).lb
    return {
        f"weibull_terms n={n}": lambda k: k.weibull_terms(logy, eta, 1.5),
        f"locate_points {len(pts)} pts, {mesh.n_triangles} triangles":
            lambda k: k.locate_points(pts, mesh.vertices, mesh.triangles, *grid, 1e-10),
        f"band_selected_inverse n={lb.shape[1]} bw={lb.shape[0] - 1}":
            lambda k: k.band_selected_inverse(lb),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write timings here")
    args = ap.parse_args()
    rows = []
    for name, fn in cases().items():
        fn(nb)  # compile outside the timed region
        t_nb = min(timeit.repeat(lambda: fn(nb), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: fn(npk), number=1, repeat=args.repeat))
        rows.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np,
                     "speedup": t_np / t_nb})
        print(f"{name:<55} numba {t_nb * 1e3:9.2f} ms  numpy {t_np * 1e3:9.2f} ms  "
              f"x{t_np / t_nb:6.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
