#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times each hot kernel (forward + backward) at model-realistic shapes and one
larger shape, and reports per-call microseconds plus the speedup ratio.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import sys
import time

import numpy as np

from multitrans.kernels import fallback

try:
    from multitrans.kernels import _ckernels
except ImportError:
    _ckernels = None

# (rows, cols): typical in-model shapes (17 image tokens / 13 text tokens at
# dim 64, MLP at 256) plus one larger stress shape
SHAPES = [(17, 64), (13, 64), (17, 256), (128, 512)]


def bench(fn, args, repeats):
    fn(*args)  # warm up
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best * 1e6  # microseconds


def cases(rows, cols, dtype, rng):
    x = np.ascontiguousarray(rng.normal(size=(rows, cols)).astype(dtype))
    g = np.ascontiguousarray(rng.normal(size=(rows, cols)).astype(dtype))
    gamma = np.ones(cols, dtype=dtype)
    beta = np.zeros(cols, dtype=dtype)
    sm = fallback.softmax_rows(x)
    _, xhat, inv_std = fallback.layer_norm_forward(x, gamma, beta, 1e-5)
    return [
        ("gelu_forward", "gelu_forward", (x,)),
        ("gelu_backward", "gelu_backward", (x, g)),
        ("softmax_rows", "softmax_rows", (x,)),
        ("softmax_rows_backward", "softmax_rows_backward", (sm, g)),
        ("layer_norm_forward", "layer_norm_forward", (x, gamma, beta, 1e-5)),
        ("layer_norm_backward", "layer_norm_backward", (g, xhat, inv_std, gamma)),
    ]


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not available; nothing to compare", file=sys.stderr)
        return 1

    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'shape':<12}{'dtype':<9}{'numpy us':>10}{'compiled us':>13}{'speedup':>9}")
    for rows, cols in SHAPES:
        for dtype in (np.float32, np.float64):
            for label, name, call_args in cases(rows, cols, dtype, rng):
                t_py = bench(getattr(fallback, name), call_args, args.repeats)
                t_c = bench(getattr(_ckernels, name), call_args, args.repeats)
                print(
                    f"{label:<24}{f'{rows}x{cols}':<12}{np.dtype(dtype).name:<9}"
                    f"{t_py:>10.2f}{t_c:>13.2f}{t_py / t_c:>8.2f}x"
                )
    return 0


if __name__ == "__main__":
    sys.exit(main())
