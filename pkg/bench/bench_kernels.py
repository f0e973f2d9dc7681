"""Compiled versus pure-Python kernels.

    python bench/bench_kernels.py [--repeat 5]

Times the counter-based Gaussian generator and the tridiagonal solver
directly, then one end-to-end price under each backend (the backend is
picked at import, so that part runs in subprocesses).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from crosshedge import _kernels_py

try:
    from crosshedge import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

END_TO_END = """
import time
from crosshedge import kernels
from crosshedge.model import Geometric, LogShift, MarketSpec, ConstantDrift
from crosshedge.pde import solve_pair
from crosshedge.pricing import McConfig, dynamic_price_mc
m = MarketSpec(0.2, 0.3, ConstantDrift(0.1), 1.0)
r = Geometric(0.05, 0.3, 1.0)
t = time.perf_counter()
dynamic_price_mc(LogShift(1.0), m, r, 0.0, 1.0, McConfig(200000, 50, 1))
mc = time.perf_counter() - t
t = time.perf_counter()
solve_pair(m, r, LogShift(1.0), None, 400, 400)
pde = time.perf_counter() - t
print(kernels.BACKEND, mc, pde)
"""


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    streams = np.arange(1_000_000, dtype=np.int64)
    n = 400
    rng = np.random.default_rng(0)
    lo, up = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)

    rows = []
    impls = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    for name, mod in impls:
        g = best(lambda: mod.gaussian(1, 0, streams, 7), args.repeat)
        tri = best(lambda: [mod.tridiag_solve(lo, diag, up, rhs) for _ in range(1000)], args.repeat)
        rows.append((name, g, tri))

    print(f"{'backend':<8} {'gaussian 1e6 (ms)':>18} {'1000 tridiag n=400 (ms)':>24}")
    for name, g, tri in rows:
        print(f"{name:<8} {1e3 * g:>18.1f} {1e3 * tri:>24.1f}")
    if len(rows) == 2:
        print(f"{'speedup':<8} {rows[0][1] / rows[1][1]:>17.1f}x {rows[0][2] / rows[1][2]:>23.1f}x")

    print()
    print(f"{'backend':<8} {'MC price 2e5x50 (s)':>20} {'PDE pair 400x400 (s)':>21}")
    for force in ("1", "0"):
        env = dict(os.environ, CROSSHEDGE_PURE_PYTHON=force)
        out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
        name, mc, pde = out.stdout.split()
        print(f"{name:<8} {float(mc):>20.2f} {float(pde):>21.2f}")


if __name__ == "__main__":
    main()
