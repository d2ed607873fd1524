"""Compiled vs pure-Python kernels on the same inputs and seeds.

    python benchmarks/bench_kernels.py [--quick]

The Python backend is far slower, so it runs fewer steps and the table
reports time per step (or per diagram) for both.
"""

import argparse
import time

import numpy as np

from hkpd import _pycore
from hkpd.inference import fixed_point
from hkpd.persistence import build_rips

try:
    from hkpd import _core
except ImportError:
    _core = None


def _best(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _rips_args(n, rng):
    f = build_rips(rng.random((n, 2)))
    ev = f.edge_values
    _, inv = np.unique(ev, return_inverse=True)
    rank = np.full((n, n), -1, dtype=np.int64)
    e = f.edges
    rank[e[:, 0], e[:, 1]] = inv
    rank[e[:, 1], e[:, 0]] = inv
    return rank, np.ascontiguousarray(e[:, 0]), np.ascontiguousarray(e[:, 1]), True


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    scale = 10 if args.quick else 1
    cases = []

    n_pts = 60 if args.quick else 100
    rargs = _rips_args(n_pts, rng)
    cases.append((f"rips_pairs n={n_pts}", "diagram", 1, 1, lambda k, n: k.rips_pairs(*rargs)))

    X = rng.normal(size=(10, 136))
    lab2 = np.repeat([0, 1], 5).astype(np.int64)
    cases.append(("two_sample_chain m=n=5", "step", 200_000 // scale, 2_000 // scale,
                  lambda k, n: k.two_sample_chain(X, lab2, n, 500, 1)))

    for sizes in [(4, 4, 4), (5, 20, 100)]:
        N = sum(sizes)
        P = rng.random((N, 136))
        D = ((P[:, None] - P[None]) ** 2).sum(-1)
        Dint, _ = fixed_point(D)
        lab = np.repeat(np.arange(3), sizes).astype(np.int64)
        tag = "/".join(map(str, sizes))
        cases.append((f"tanova_chain {tag}", "step", 1_000_000 // scale, 5_000 // scale,
                      lambda k, n, Dint=Dint, lab=lab: k.tanova_chain(Dint, lab, 3, n, 500, 1)))
        cases.append((f"permanova_chain {tag}", "perm", 20_000 // scale, 200 // scale,
                      lambda k, n, D=D, lab=lab: k.permanova_chain(D, lab, 3, n, 1)))

    print(f"{'kernel':32s} {'unit':8s} {'compiled':>14s} {'python':>14s} {'speedup':>9s}")
    for name, unit, n_fast, n_slow, run in cases:
        t_py = _best(lambda: run(_pycore, n_slow), 1) / n_slow
        t_c = _best(lambda: run(_core, n_fast), 3) / n_fast if _core else float("nan")
        print(f"{name:32s} {unit:8s} {t_c * 1e9:11.1f} ns {t_py * 1e9:11.1f} ns {t_py / t_c:8.0f}x")

if __name__ == "__main__":
    main()
