"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--solve]

Kernel timings call both backends directly in one process. ``--solve`` also
times an end-to-end continuation in fresh processes with MROF_NUMBA=1 and 0.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from mrof import make_grid, parse_manifold
from mrof.kernels import numba_impl, numpy_impl

if numba_impl is None:
    sys.exit("numba is not installed; nothing to compare")


def kernel_cases(rng):
    H = parse_manifold("hyperbolic:2")
    g = make_grid("rect2d:128x128")
    u = H.random_point(rng, None, 1.0, size=g.n_nodes)
    ua, ub = u[g.edge_a], u[g.edge_b]
    d = rng.uniform(0, 1, g.n_edges)
    inv_len2 = 1.0 / g.edge_length**2
    coef = rng.uniform(0, 1, g.n_edges)
    lab = rng.standard_normal((g.n_edges, 3))
    lba = rng.standard_normal((g.n_edges, 3))
    f = np.cumsum(rng.standard_normal(100_000))
    mass = np.full(len(f), 0.5)
    g3 = make_grid("interval:3")
    pts = rng.standard_normal((120, 1))
    D = np.abs(pts - pts.T)
    fid = rng.uniform(0, 1, (3, 120))
    return {
        "edge_geometry (32k edges, logs)": lambda m: m.edge_geometry(H.code, 1.0, ua, ub, True),
        "tv_assemble (128x128 grid)": lambda m: m.tv_assemble(d, inv_len2, g.term_weight, g.term_edges,
                                                              0.01, 0.1, True),
        "scatter_gradient (32k edges)": lambda m: m.scatter_gradient(g.n_nodes, g.edge_a, g.edge_b, coef, lab, lba),
        "taut_string (1e5 samples)": lambda m: m.taut_string(f, mass),
        "brute_force_scan (120^3 tuples)": lambda m: m.brute_force_scan(
            D, fid, g3.edge_a, g3.edge_b, 1.0 / g3.edge_length**2, g3.term_weight, g3.term_edges, 0.01, 0.1),
    }


def best_of(fn, repeat):
    fn()  # warm-up (includes numba compilation)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


SOLVE_SNIPPET = """
import time, numpy as np
from mrof import make_grid, parse_manifold, continuation, default_schedule
from mrof.verify import geodesic_path_family
M = parse_manifold("hyperbolic:2")
g = make_grid("interval:1024")
f = geodesic_path_family(M).sample(g)
continuation(M, make_grid("interval:16"), geodesic_path_family(M).sample(make_grid("interval:16")), 8.0,
             default_schedule(make_grid("interval:16")))
t = time.perf_counter()
continuation(M, g, f, 8.0, default_schedule(g))
print(time.perf_counter() - t)
"""


def solve_time(flag):
    env = dict(os.environ, MROF_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--solve", action="store_true", help="also time a full continuation per backend")
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, call in kernel_cases(rng).items():
        t_np = best_of(lambda: call(numpy_impl), args.repeat)
        t_nb = best_of(lambda: call(numba_impl), args.repeat)
        print(f"{name:36s} {1e3 * t_np:11.3f} {1e3 * t_nb:11.3f} {t_np / t_nb:8.2f}")
    if args.solve:
        t_np, t_nb = solve_time("0"), solve_time("1")
        print(f"{'continuation hyperbolic interval:1024':36s} {1e3 * t_np:11.1f} {1e3 * t_nb:11.1f} "
              f"{t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
