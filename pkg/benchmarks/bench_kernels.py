"""Time the compiled and numpy kernels on experiment-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from rsslocate import _pykernels
from rsslocate.scenario import Roi, make_grid
from rsslocate.srwac import build_phi

try:
    from rsslocate import _ckernels
except ImportError:
    _ckernels = None


def likelihood_args(k=3, m=150, seed=0):
    rng = np.random.default_rng(seed)
    theta = np.concatenate([rng.random(k) * 2000, rng.random(k) * 2000, rng.uniform(2000, 4000, k)])
    sensors = rng.random((m, 2)) * 2000
    logr = np.log(rng.random(m) * 1e-3 + 1e-5)
    b = np.log(10) ** 2 * 36 / 200
    return theta, sensors, logr, 2.5, b, np.expm1(2 * b), 1.0


def qp_args(seed=0):
    rng = np.random.default_rng(seed)
    grid = make_grid(Roi(2000, 2000), 121)
    phi = build_phi(grid, rng.random((150, 2)) * 2000, 2.5, 4000)
    r = phi[:, [13, 60, 101]] @ np.array([0.7, 0.5, 0.9])
    B = np.ascontiguousarray(phi.T @ phi)
    c = 1e-3 - phi.T @ r
    return B, c, np.zeros(121), 1e-8, 200


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    cases = [
        ("objective K=3 M=150", "mle_objective", likelihood_args()),
        ("objective+grad K=3 M=150", "mle_objective_grad", likelihood_args()),
        ("objective+grad K=6 M=180", "mle_objective_grad", likelihood_args(6, 180)),
        ("box QP N=121, 200 PG iters", "box_qp_pg", qp_args()),
    ]
    print(f"{'kernel':30s} {'python us':>11s} {'cython us':>11s} {'speedup':>8s}")
    for label, name, a in cases:
        tp = min(timeit.repeat(lambda: getattr(_pykernels, name)(*a), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{label:30s} {tp * 1e6:11.1f} {'n/a':>11s}")
            continue
        tc = min(timeit.repeat(lambda: getattr(_ckernels, name)(*a), number=1, repeat=args.repeat))
        print(f"{label:30s} {tp * 1e6:11.1f} {tc * 1e6:11.1f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
