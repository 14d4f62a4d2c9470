"""Time the compiled and pure-numpy kernel backends on identical inputs.

Usage: ``python benchmarks/bench_kre.py [--n 5000] [--queries 20000] [--repeat 3]``

Prints one line per kernel and backend (best of ``repeat`` after a warm-up
call) and the largest absolute difference between the two backends.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from commute_effects._accel import NUMBA_INSTALLED
from commute_effects.kre._kernels import loo_group_predict, nw_predict


def _best(fn, repeat: int) -> tuple[float, np.ndarray]:
    out = fn()
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=5000, help="training samples")
    p.add_argument("--queries", type=int, default=20000, help="map nodes to predict")
    p.add_argument("--journeys", type=int, default=300, help="groups for leave-one-group-out")
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    xs = rng.uniform(0, 16000, (args.n, 2))
    y = np.hypot(*(xs - 8000).T) / 300 + rng.normal(0, 1, args.n)
    q = rng.uniform(0, 16000, (args.queries, 2))
    groups = np.sort(rng.integers(0, args.journeys, args.n))
    k = max(1, round(0.01 * args.n))
    ks = np.array([max(1, round(f * args.n)) for f in (0.005, 0.01, 0.02, 0.05)])
    cs = np.array([0.25, 1 / 3, 0.5, 1.0, 2.0])

    backends = ["numpy"] + (["numba"] if NUMBA_INSTALLED else [])
    cases = {
        "nw_predict": lambda b: nw_predict(xs, y, q, k, 0.5, backend=b),
        "loo_group_predict": lambda b: loo_group_predict(xs, y, groups, ks, cs, backend=b),
    }
    print(f"n={args.n} queries={args.queries} journeys={args.journeys} k={k}")
    for name, fn in cases.items():
        res = {}
        for b in backends:
            dt, res[b] = _best(lambda: fn(b), args.repeat)
            print(f"{name:18s} {b:6s} {dt * 1e3:10.1f} ms")
        if len(res) == 2:
            diff = float(np.nanmax(np.abs(res["numpy"] - res["numba"])))
            print(f"{name:18s} max |numpy - numba| = {diff:.3g}")
    if not NUMBA_INSTALLED:
        print("numba not installed: compiled backend skipped")


if __name__ == "__main__":
    main()
