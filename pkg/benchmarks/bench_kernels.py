#!/usr/bin/env python3
"""Benchmark the compiled warp kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--size 256] [--pairs 60] [--reps 5]

Reports wall time per backend for the two hot entry points (full-field
warp and the fused warp+squared-difference reduction) and verifies both
backends agree numerically.
"""

import argparse
import time

import numpy as np

from forgescore.kernels import _warp_np

try:
    from forgescore.kernels import _warp_cy
except ImportError:
    _warp_cy = None


def bench(fn, reps):
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--pairs", type=int, default=60)
    parser.add_argument("--reps", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    h = w = args.size
    frames = np.ascontiguousarray(rng.random((args.pairs + 1, h, w, 3)))
    flows = np.ascontiguousarray(rng.normal(0, 2.0, (args.pairs, h, w, 2)))

    backends = [("numpy", _warp_np)]
    if _warp_cy is not None:
        backends.append(("compiled", _warp_cy))
    else:
        print("compiled kernel not built; benchmarking the fallback only")

    print(f"{args.pairs} pairs of {h}x{w}x3 frames, best of {args.reps} runs\n")
    results = {}
    for name, impl in backends:
        def run_warp(impl=impl):
            for i in range(args.pairs):
                impl.warp_image(frames[i], flows[i])

        def run_err(impl=impl):
            acc = 0.0
            for i in range(args.pairs):
                acc += impl.warp_error_pair(frames[i], flows[i], frames[i + 1])
            return acc

        tw = bench(run_warp, args.reps)
        te = bench(run_err, args.reps)
        results[name] = (tw, te)
        mpx = args.pairs * h * w / 1e6
        print(
            f"{name:>9}: warp_image {tw:.4f}s ({mpx / tw:.1f} Mpix/s)   "
            f"warp_error_pair {te:.4f}s ({mpx / te:.1f} Mpix/s)"
        )

    if _warp_cy is not None:
        tw_np, te_np = results["numpy"]
        tw_cy, te_cy = results["compiled"]
        print(
            f"\nspeedup: warp_image x{tw_np / tw_cy:.2f}, "
            f"warp_error_pair x{te_np / te_cy:.2f}"
        )
        a = np.asarray(_warp_cy.warp_image(frames[0], flows[0]))
        b = _warp_np.warp_image(frames[0], flows[0])
        ea = _warp_cy.warp_error_pair(frames[0], flows[0], frames[1])
        eb = _warp_np.warp_error_pair(frames[0], flows[0], frames[1])
        print(
            f"agreement: warp max|diff| {np.abs(a - b).max():.2e}, "
            f"error rel diff {abs(ea - eb) / max(ea, eb):.2e}"
        )


if __name__ == "__main__":
    main()
