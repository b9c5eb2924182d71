"""Benchmark: compiled Cython kernels vs the numpy/scipy fallback.

Times the two hot kernels (triangular solve pair behind W^{-1}, sparse
matvec pair with A) and a full CRAIG solve on channel problems under both
backends. Run as

    python benchmarks/bench_kernels.py [--sizes 128,512,1024] [--repeat 5]
"""

import argparse
import time

import numpy as np

import gkdefl
from gkdefl import _kernels
from gkdefl._kernels import MatVec, TriangularSolver


def timeit(fn, repeat, inner):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def bench_size(n, repeat):
    system = gkdefl.build_1d_channel(n)
    factor = system.factor()
    rng = np.random.default_rng(0)
    x_m = rng.standard_normal(system.m)
    x_n = rng.standard_normal(system.n)
    rows = []
    for compiled in (True, False):
        if compiled and not _kernels.have_compiled():
            continue
        name = "compiled" if compiled else "python"
        tri = TriangularSolver(factor.L, compiled=compiled)
        amv = MatVec(system.A, compiled=compiled)
        t_solve = timeit(lambda: tri.solve_lower_t(tri.solve_lower(x_m)),
                         repeat, 200)
        t_mv = timeit(lambda: amv.rmv(amv.mv(x_n)), repeat, 200)

        # full solve with the backend forced through a fresh factor
        def full_solve():
            fresh = gkdefl.spd_factorize(system.W)
            fresh._tri = TriangularSolver(fresh.L, compiled=compiled)
            sys2 = gkdefl.SaddlePointSystem(system.W, system.A, system.g,
                                            system.r, "bench")
            sys2._factor = fresh
            gkdefl.craig_solve(sys2, gkdefl.CraigOptions(tol=1e-10))

        t_craig = timeit(full_solve, repeat, 1)
        rows.append((name, t_solve, t_mv, t_craig))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="128,512,1024")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    print(f"active backend: {_kernels.backend_name()}"
          f" (compiled available: {_kernels.have_compiled()})")
    header = f"{'n':>6} {'backend':>9} {'W^-1 apply':>12} {'A/A^T mv':>12} {'CRAIG solve':>12}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        rows = bench_size(n, args.repeat)
        for name, t_solve, t_mv, t_craig in rows:
            print(f"{n:>6} {name:>9} {t_solve * 1e6:>10.1f}us {t_mv * 1e6:>10.1f}us "
                  f"{t_craig * 1e3:>10.2f}ms")
        if len(rows) == 2:
            s = rows[1][1] / rows[0][1]
            m = rows[1][2] / rows[0][2]
            c = rows[1][3] / rows[0][3]
            print(f"{'':>6} {'speedup':>9} {s:>11.2f}x {m:>11.2f}x {c:>11.2f}x")


if __name__ == "__main__":
    main()
