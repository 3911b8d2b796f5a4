"""Compare the compiled and pure-Python SDE walk kernels.

Usage: python benchmarks/bench_kernels.py [--steps N] [--repeat R]

Both backends consume the same normal increments and must produce identical
counts; the script checks this and reports throughput in Euler steps per
second, plus one end-to-end sde_cross_validate timing per backend.
"""

import argparse
import math
import time

import numpy as np

from branchlim.kernels import available_backends, walk_chunk_for
from branchlim.rayknight import BGK, DriftedBm, sde_cross_validate
from branchlim.rng import RngSeed


def bench_chunk(backend, z, k=20, alpha=0.5, repeat=3):
    dt = 0.1 / k**2 / (2 * alpha)
    sd = math.sqrt(2 * alpha * dt)
    walk = walk_chunk_for(backend)
    best, out = math.inf, None
    for _ in range(repeat):
        counts = np.zeros(400, np.int64)
        occ = np.zeros(400, np.int64)
        start = time.perf_counter()
        res = walk(z, 0.0, -20, 0, counts, occ, 1.0, 1.0 / k, 0.0, sd, BGK * sd, -200, 1 << 62, 1 << 62)
        best = min(best, time.perf_counter() - start)
        out = (res, counts.copy(), occ.copy())
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    z = np.random.default_rng(0).standard_normal(args.steps)
    backends = available_backends()
    results = {b: bench_chunk(b, z, repeat=args.repeat) for b in backends}
    print(f"{'backend':<8} {'seconds':>10} {'steps/s':>14}")
    for b, (sec, _) in results.items():
        print(f"{b:<8} {sec:>10.4f} {args.steps / sec:>14.3e}")
    if len(results) == 2:
        (_, (r1, c1, o1)), (_, (r2, c2, o2)) = results["cython"], results["python"]
        same = r1 == r2 and np.array_equal(c1, c2) and np.array_equal(o1, o2)
        print(f"speedup {results['python'][0] / results['cython'][0]:.1f}x, identical output: {same}")
    print()
    bm = DriftedBm(0.5, 0.0)
    for b in backends:
        start = time.perf_counter()
        rep = sde_cross_validate(bm, 10, 0.5, 0.5, 8, RngSeed(1), time_cap=500.0, backend=b)
        print(f"sde_cross_validate k=10, 8 paths, {b}: {time.perf_counter() - start:.2f} s "
              f"({int(rep.n_steps.sum())} steps)")


if __name__ == "__main__":
    main()
