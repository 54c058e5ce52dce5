"""Compare the numba and numpy forward kernels on compiled networks.

Usage: python3 benchmarks/bench_forward.py [--points N] [--repeat R]
"""

import argparse
import time

import numpy as np

from leakynet import Box, CodingParams, compile
from leakynet import _kernels
from leakynet.targets import get_target


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--points", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    print(f"numba available: {_kernels.HAVE_NUMBA}")
    rng = np.random.default_rng(0)
    for name, K in [("sawtooth1", 8), ("sine2", 4), ("sine2", 6)]:
        t = get_target(name)
        net, _ = compile(t, Box.cube(t.dx), CodingParams(K, K, t.dx, t.dy), measure=False)
        x = rng.random((args.points, t.dx))
        y_np = net.forward(x, backend="numpy")
        row = f"{name:10s} K={K} depth={net.depth:5d}  numpy {best_of(lambda: net.forward(x, backend='numpy'), args.repeat):8.4f}s"
        if _kernels.HAVE_NUMBA:
            net.forward(x[:10], backend="numba")  # compile outside the timing
            tn = best_of(lambda: net.forward(x, backend="numba"), args.repeat)
            gap = np.max(np.abs(net.forward(x, backend="numba") - y_np))
            row += f"  numba {tn:8.4f}s  max|diff| {gap:.1e}"
        print(row)


if __name__ == "__main__":
    main()
