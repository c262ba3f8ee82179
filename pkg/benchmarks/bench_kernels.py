#!/usr/bin/env python3
"""Benchmark the compiled kernel against the NumPy kernel.

Times the fused forward+tangent pass and the reverse sweep of the convex
branch at the default architecture, over batch sizes spanning the training
workloads (8 = one tension batch, 48 = collapsed curve nodes, 200 = a full
curve, 3200 = a torsion curve without node collapse).

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from viscofit import _kernel_numpy

try:
    from viscofit import _kernel_cy
except ImportError:
    _kernel_cy = None

BATCH_SIZES = (8, 48, 200, 3200)
WIDTHS = (30, 30)
COUPLE = 5


def make_net(seed=0):
    rng = np.random.default_rng(seed)
    A = [np.ascontiguousarray(rng.normal(size=(w, 2))) for w in WIDTHS]
    B = [np.ascontiguousarray(rng.normal(size=(w, COUPLE))) for w in WIDTHS]
    U = [np.ascontiguousarray(np.abs(rng.normal(size=(WIDTHS[1], WIDTHS[0]))))]
    wx = np.abs(rng.normal(size=WIDTHS[-1]))
    wc = np.abs(rng.normal(size=COUPLE))
    wI = np.abs(rng.normal(size=2))
    Cs = [rng.normal(size=COUPLE) ** 2 for _ in WIDTHS]
    Cout = rng.normal(size=COUPLE) ** 2
    return A, B, U, wx, wc, wI, Cs, Cout


def bench(kernel, n, reps):
    A, B, U, wx, wc, wI, Cs, Cout = make_net()
    rng = np.random.default_rng(1)
    I = np.ascontiguousarray(rng.uniform(3.0, 7.0, size=(n, 2)))
    Idot = np.ascontiguousarray(rng.normal(size=(n, 2)))
    h_bar = rng.normal(size=n)
    # warm up
    _, _, cache = kernel.conv_dual(A, B, U, wx, wc, wI, I, Idot, Cs, Cout)
    kernel.conv_backward(A, B, U, wx, wc, wI, I, Idot, Cs, Cout, cache,
                         h_bar=h_bar)
    t0 = time.perf_counter()
    for _ in range(reps):
        _, _, cache = kernel.conv_dual(A, B, U, wx, wc, wI, I, Idot, Cs, Cout)
        kernel.conv_backward(A, B, U, wx, wc, wI, I, Idot, Cs, Cout, cache,
                             h_bar=h_bar)
    return (time.perf_counter() - t0) / reps


def main():
    if _kernel_cy is None:
        print("compiled kernel not built; run "
              "`python3 setup.py build_ext --inplace` first")
    print(f"{'batch':>6} {'numpy':>12} {'cython':>12} {'speedup':>8}")
    for n in BATCH_SIZES:
        reps = max(5, int(4000 / n))
        t_np = bench(_kernel_numpy, n, reps)
        if _kernel_cy is not None:
            t_cy = bench(_kernel_cy, n, reps)
            print(f"{n:>6} {t_np * 1e6:>10.1f}us {t_cy * 1e6:>10.1f}us "
                  f"{t_np / t_cy:>7.2f}x")
        else:
            print(f"{n:>6} {t_np * 1e6:>10.1f}us {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
