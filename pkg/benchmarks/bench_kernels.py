"""Compiled kernels against the NumPy fallback.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Prints the
best-of-N wall time per call for each backend and the speedup.
"""

import argparse
import timeit

import numpy as np

from pllab import _kernels_py as py
from pllab.expr import parse, to_program

try:
    from pllab import _kernels as cy
except ImportError:
    cy = None


def cases():
    rng = np.random.default_rng(0)
    prog = to_program(parse("(x2 - sin(x1))^2 + 0.1 * exp(-x1^2) * log(1 + x2^2)", 2))
    x = np.array([0.3, 0.7])
    cloud = rng.uniform(-1, 1, (2000, 2))
    X = rng.uniform(-1, 1, (500, 2))
    curve = np.column_stack([np.linspace(-3, 3, 400), np.sin(np.linspace(-3, 3, 400))])
    return {
        "eval_program": lambda m: m.eval_program(prog.ops, prog.args, prog.consts, x, prog.depth),
        "nearest_ties (2000 pts)": lambda m: m.nearest_ties(cloud, x, 1e-10),
        "min_dists (500 x 2000)": lambda m: m.min_dists(X, cloud),
        "single_linkage (400 pts)": lambda m: m.single_linkage_labels(curve, 0.05),
    }


def bench(fn, repeat):
    timer = timeit.Timer(fn)
    n, _ = timer.autorange()
    return min(timer.repeat(repeat, n)) / n


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if cy is None:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':28s} {'python':>12s} {'compiled':>12s} {'speedup':>8s}")
    for name, call in cases().items():
        tp = bench(lambda: call(py), args.repeat)
        if cy is None:
            print(f"{name:28s} {tp * 1e6:10.2f}us {'-':>12s} {'-':>8s}")
            continue
        tc = bench(lambda: call(cy), args.repeat)
        print(f"{name:28s} {tp * 1e6:10.2f}us {tc * 1e6:10.2f}us {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
