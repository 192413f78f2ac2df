"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--cells 2000] [--repeat 5]

Prints one line per kernel with the best-of-``repeat`` wall time of each
backend and the speedup; exits early when the extension is not built.
"""
import argparse
import timeit

import numpy as np

from lowreg_fem import kernels
from lowreg_fem.fields import get_field
from lowreg_fem.mesh import build_unit_cube_mesh, refine_n
from lowreg_fem.norms import cell_seminorm_squares


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cells", type=int, default=2000)
    ap.add_argument("--points", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        print("compiled kernels not available; nothing to compare")
        return
    kernels.set_num_threads(args.threads)
    rng = np.random.default_rng(0)
    shape = (args.cells, args.points, 3)
    X, Y, GX, GY = (rng.normal(size=shape) for _ in range(4))
    w = rng.uniform(size=args.points)
    wk = rng.uniform(size=shape[:2])
    cases = {
        "pair_sums": lambda b: kernels.pair_sums(X, Y, GX, GY, w, 3.5, backend=b),
        "weighted_sq_sums": lambda b: kernels.weighted_sq_sums(X, Y, wk, backend=b),
    }
    mesh = refine_n(build_unit_cube_mesh(2), 1)
    g = get_field("smooth_trig")
    cases["cell_seminorms (384 tets)"] = lambda b: cell_seminorm_squares(g, mesh, 0.4, backend=b)
    print(f"{'kernel':28s} {'cython [s]':>11s} {'numpy [s]':>11s} {'speedup':>8s}")
    for name, fn in cases.items():
        tc = _best(lambda: fn("cython"), args.repeat)
        tn = _best(lambda: fn("numpy"), args.repeat)
        print(f"{name:28s} {tc:11.4f} {tn:11.4f} {tn / tc:8.2f}")


if __name__ == "__main__":
    main()
