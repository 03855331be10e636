"""Benchmark the compiled reduction kernels against the numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--quick]
"""

import argparse
import time

import numpy as np

import smoothext._kernels_py as kpy

try:
    import smoothext._kernels_c as kc
except ImportError:
    kc = None


def timeit(fn, *args, repeats=3):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(quick=False):
    rng = np.random.default_rng(0)
    n_pair = 1200 if quick else 4000
    n_cone = (600, 10_000) if quick else (2000, 40_000)
    grid = (101, 101) if quick else (201, 201)

    rows = []

    pts = rng.uniform(-1, 1, (n_pair, 2))
    vals = np.sin(3 * pts[:, 0]) * pts[:, 1]
    rows.append(("pairwise_max_quotient", f"{n_pair} pts",
                 lambda m: m.pairwise_max_quotient(vals, pts, 2.0)))

    m, q = n_cone
    cpts = rng.uniform(-1, 1, (m, 2))
    cvals = rng.uniform(-1, 1, m)
    queries = rng.uniform(-1, 1, (q, 2))
    rows.append(("cone_min", f"{m} pts x {q} queries",
                 lambda mod: mod.cone_min(cvals, cpts, queries, 1.5, 2.0)))

    gvals = rng.uniform(-1, 1, grid)
    steps = [2.0 / (grid[0] - 1), 2.0 / (grid[1] - 1)]
    rows.append(("lattice_envelope_net", f"{grid[0]}x{grid[1]} grid",
                 lambda mod: mod.lattice_envelope_net(gvals, steps, 0.05,
                                                      0.12, 1)))

    aq = rng.uniform(-1, 1, (300 if quick else 2000, 2))
    rows.append(("lattice_envelope_at", f"{aq.shape[0]} queries",
                 lambda mod: mod.lattice_envelope_at(
                     gvals, [-1.0, -1.0], steps, 0.05, 0.12, 1, aq)))

    print(f"{'kernel':24s} {'size':22s} {'numpy':>10s} {'compiled':>10s} "
          f"{'speedup':>8s}")
    for name, size, fn in rows:
        t_py, out_py = timeit(fn, kpy)
        if kc is None:
            print(f"{name:24s} {size:22s} {t_py * 1e3:9.2f}ms {'n/a':>10s}")
            continue
        t_c, out_c = timeit(fn, kc)
        agree = np.allclose(np.asarray(out_py), np.asarray(out_c),
                            rtol=0, atol=1e-12)
        flag = "" if agree else "  MISMATCH"
        print(f"{name:24s} {size:22s} {t_py * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms "
              f"{t_py / t_c:7.1f}x{flag}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    bench(quick=args.quick)
