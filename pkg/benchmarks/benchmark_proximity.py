"""Compare the numba grid index against the pure-numpy kd-tree fallback.

Run:  python benchmarks/benchmark_proximity.py [n_queries]
The numba path is selected by default; set LBSPC_NUMBA=0 to force numpy.
This script times both by constructing the index classes directly.
"""
import sys
import time

import numpy as np

from lbspc.proximity import _GridIndex, _KDTreeIndex
from lbspc.synthetic import add_noise, icosphere


def bench(index_cls, mesh, pts, repeats=3):
    idx = index_cls(mesh)  # build (includes JIT compile on first numba call)
    idx.query(pts[:10])  # warm up
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        d, closest, tri = idx.query(pts)
        best = min(best, time.perf_counter() - t0)
    return best, d


def main():
    n_queries = int(sys.argv[1]) if len(sys.argv) > 1 else 200_000
    rng = np.random.default_rng(0)
    print(f"{'mesh':>12} {'queries':>9} {'numba grid':>12} {'numpy kdtree':>13} {'speedup':>8}")
    for sub in (3, 4, 5):
        mesh = add_noise(icosphere(sub), 0.01, seed=1)
        pts = rng.uniform(-1.3, 1.3, size=(n_queries, 3))
        try:
            t_grid, d1 = bench(_GridIndex, mesh, pts)
        except ImportError:
            print("numba unavailable; only the numpy backend was timed")
            t_grid, d1 = np.nan, None
        t_kd, d2 = bench(_KDTreeIndex, mesh, pts)
        if d1 is not None:
            assert np.allclose(d1, d2, rtol=1e-12, atol=1e-14), "backends disagree"
        print(
            f"{mesh.n_faces:>9} tri {n_queries:>9} {t_grid:>11.3f}s {t_kd:>12.3f}s "
            f"{t_kd / t_grid:>7.1f}x"
        )


if __name__ == "__main__":
    main()
