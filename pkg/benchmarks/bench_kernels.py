#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times conv2d forward/backward and linear forward/backward on the hot layer
shapes of the tiny network, then checks numerical agreement between the two
backends.

Usage:
    python benchmarks/bench_kernels.py [--batch N] [--reps R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from patternreg.kernels import numpy_impl

try:
    from patternreg.kernels import numba_impl
except ImportError:
    numba_impl = None

# (label, input shape, weight shape, stride)
CONV_CASES = [
    ("stem 1->16 s(2,4)", (1, 7, 214), (16, 1, 3, 3), (2, 4)),
    ("block1a 16->16 s2", (16, 4, 54), (16, 16, 3, 3), (2, 2)),
    ("block1b 16->16 s1", (16, 2, 27), (16, 16, 3, 3), (1, 1)),
    ("block2a 16->32 s2", (16, 2, 27), (32, 16, 3, 3), (2, 2)),
    ("block2b 32->32 s1", (32, 1, 14), (32, 32, 3, 3), (1, 1)),
]
LINEAR_CASES = [
    ("head fc1 64->128", 64, 128),
    ("head fc2 128->1", 128, 1),
]


def timeit(fn, *args, reps):
    fn(*args)  # warm (and JIT-compile on the numba side)
    t0 = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - t0) / reps


def bench_conv(impl, x, w, b, go, stride, reps):
    tf = timeit(impl.conv2d_forward, x, w, b, stride, (1, 1), reps=reps)
    tb = timeit(impl.conv2d_backward, x, w, go, stride, (1, 1), reps=reps)
    return tf, tb


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=128,
                        help="batch size (default 128)")
    parser.add_argument("--reps", type=int, default=10,
                        help="timing repetitions (default 10)")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    impls = [("numpy", numpy_impl)]
    if numba_impl is not None:
        impls.append(("numba", numba_impl))
    else:
        print("numba unavailable; timing numpy fallback only")

    print(f"{'case':<22} " + " ".join(f"{n + ' ' + d:>14}"
                                      for n, _ in impls for d in ("fwd", "bwd")))
    totals = {n: 0.0 for n, _ in impls}
    worst = 0.0
    for label, xshape, wshape, stride in CONV_CASES:
        x = rng.standard_normal((args.batch,) + xshape).astype(np.float32)
        w = rng.standard_normal(wshape).astype(np.float32)
        b = rng.standard_normal(wshape[0]).astype(np.float32)
        out = numpy_impl.conv2d_forward(x, w, b, stride, (1, 1))
        go = rng.standard_normal(out.shape).astype(np.float32)

        row = f"{label:<22} "
        results = {}
        for name, impl in impls:
            tf, tb = bench_conv(impl, x, w, b, go, stride, args.reps)
            totals[name] += tf + tb
            results[name] = impl.conv2d_forward(x, w, b, stride, (1, 1))
            row += f"{tf * 1e3:>11.2f}ms {tb * 1e3:>11.2f}ms "
        print(row)
        if len(impls) == 2:
            worst = max(worst, float(np.max(np.abs(
                results["numpy"] - results["numba"]))))

    for label, f_in, g_out in LINEAR_CASES:
        x = rng.standard_normal((args.batch, f_in)).astype(np.float32)
        w = rng.standard_normal((g_out, f_in)).astype(np.float32)
        b = rng.standard_normal(g_out).astype(np.float32)
        go = rng.standard_normal((args.batch, g_out)).astype(np.float32)
        row = f"{label:<22} "
        for name, impl in impls:
            tf = timeit(impl.linear_forward, x, w, b, reps=args.reps)
            tb = timeit(impl.linear_backward, x, w, go, reps=args.reps)
            totals[name] += tf + tb
            row += f"{tf * 1e3:>11.3f}ms {tb * 1e3:>11.3f}ms "
        print(row)

    print()
    for name, total in totals.items():
        print(f"{name} total per training step (fwd+bwd): {total * 1e3:.1f} ms")
    if len(impls) == 2 and totals["numba"] > 0:
        print(f"speedup numba vs numpy: {totals['numpy'] / totals['numba']:.2f}x")
        print(f"max |numpy - numba| on conv forward outputs: {worst:.2e} "
              f"(float32; backends use different summation orders)")


if __name__ == "__main__":
    main()
