"""Benchmark the segmentation DP kernel: native extension vs numpy fallback.

Usage: python benchmarks/bench_kernels.py [--frames 64 256 512] [--tokens 196]

The DP is the pipeline's hot loop (O(B^2 * N_v / 64) word operations), so
this is the comparison that decides whether building the extension is worth
it on a given machine.
"""

import argparse
import time

import numpy as np

from tokmerge._kernels import _pykernels
from tokmerge.temporal import RedundancyMask

try:
    from tokmerge._kernels import _native
except ImportError:
    _native = None


def bench(fn, words, frames, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(words, frames)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, nargs="+", default=[64, 128, 256, 512])
    parser.add_argument("--tokens", type=int, default=196)
    parser.add_argument("--density", type=float, default=0.5)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    print(f"{'frames':>7} {'tokens':>7} {'python (ms)':>12} {'native (ms)':>12} {'speedup':>8}")
    for b in args.frames:
        rows = rng.random((b - 1, args.tokens)) < args.density
        mask = RedundancyMask.from_bool(rows, args.tokens)
        t_py = bench(_pykernels.dp_segment, mask.words, b, args.repeats)
        if _native is None:
            print(f"{b:>7} {args.tokens:>7} {t_py * 1e3:>12.2f} {'n/a':>12} {'n/a':>8}")
            continue
        t_nat = bench(_native.dp_segment, mask.words, b, args.repeats)
        dp_py, _ = _pykernels.dp_segment(mask.words, b)
        dp_nat, _ = _native.dp_segment(mask.words, b)
        assert (dp_py == dp_nat).all(), "backends disagree"
        print(f"{b:>7} {args.tokens:>7} {t_py * 1e3:>12.2f} {t_nat * 1e3:>12.2f} "
              f"{t_py / t_nat:>8.1f}x")


if __name__ == "__main__":
    main()
