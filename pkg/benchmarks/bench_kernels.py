"""Compare the compiled and numpy splatting kernels.

    python benchmarks/bench_kernels.py [--events N] [--repeat R]
"""

import argparse
import time

import numpy as np

from stscflow import kernels


def _inputs(n, shape, seed=0):
    rng = np.random.default_rng(seed)
    B, K, H, W = shape
    qx = rng.uniform(-1, W, n)
    qy = rng.uniform(-1, H, n)
    w = rng.choice([-1.0, 1.0], n)
    b = rng.integers(0, B, n)
    u = rng.uniform(-0.5, K - 0.5, n)
    k0 = np.floor(u).astype(np.int64)
    wk = 1.0 - (u - k0)
    return qx, qy, w, b, k0, wk


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--events", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    shape = (15, 5, 128, 128)
    qx, qy, w, b, k0, wk = _inputs(args.events, shape)
    grad = np.random.default_rng(1).normal(size=shape)
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    ref = kernels.splat(shape, qx, qy, w, b, k0, wk, backend="python")
    print(f"{args.events} events into {shape}; best of {args.repeat}")
    for name in backends:
        out = kernels.splat(shape, qx, qy, w, b, k0, wk, backend=name)
        t_fwd = _time(lambda: kernels.splat(shape, qx, qy, w, b, k0, wk, backend=name), args.repeat)
        t_bwd = _time(lambda: kernels.splat_grad(grad, qx, qy, w, b, k0, wk, backend=name), args.repeat)
        diff = np.abs(out - ref).max()
        print(f"{name:8s} splat {t_fwd * 1e3:8.2f} ms   splat_grad {t_bwd * 1e3:8.2f} ms   max |diff| {diff:.1e}")
    if len(backends) == 1:
        print("compiled backend unavailable; only the numpy kernels were timed")


if __name__ == "__main__":
    main()
