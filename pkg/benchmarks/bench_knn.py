"""Compare the compiled and numpy nearest-neighbour kernels.

    python benchmarks/bench_knn.py [--n 1000 4000 16000] [--k 1 8 64] [--repeat 20]

Prints one line per (n, k) with the median wall time of each kernel, the
speed-up, and whether the two kernels returned identical neighbour sets.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from amw._backend import KERNELS
from amw.matching import knn_match


def _time(fn, repeat: int) -> float:
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        runs.append(time.perf_counter() - t0)
    return statistics.median(runs)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[1000, 4000, 16000])
    ap.add_argument("--k", type=int, nargs="+", default=[1, 8, 64])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if "compiled" not in KERNELS:
        print("compiled kernel not built; only the numpy kernel is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'n':>7} {'k':>4} {'python ms':>10} {'compiled ms':>12} {'speed-up':>9} same")
    for n in args.n:
        scores = rng.random(n)
        a = (rng.random(n) < 0.4).astype(np.int8)
        for k in args.k:
            py = KERNELS["python"]
            t_py = _time(lambda: knn_match(scores, a, k, kernel=py), args.repeat)
            m_py = knn_match(scores, a, k, kernel=py)
            if "compiled" in KERNELS:
                cc = KERNELS["compiled"]
                t_cc = _time(lambda: knn_match(scores, a, k, kernel=cc), args.repeat)
                m_cc = knn_match(scores, a, k, kernel=cc)
                same = np.array_equal(m_py.neighbors, m_cc.neighbors)
                print(f"{n:>7} {k:>4} {t_py * 1e3:>10.3f} {t_cc * 1e3:>12.3f} {t_py / t_cc:>9.2f} {same}")
            else:
                print(f"{n:>7} {k:>4} {t_py * 1e3:>10.3f} {'-':>12} {'-':>9} -")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
