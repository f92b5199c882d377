#!/usr/bin/env python3
"""Benchmark the compiled FFT core against the NumPy fallback.

Times the decoupled block-circulant matvec (the hot kernel of inference
and of every cost-model instrumentation run) across matrix sizes and block
sizes, then single transforms. Usage:

    python3 benchmarks/bench_backends.py [--repeats 200] [--size 1024]
"""

import argparse
import time

import numpy as np

from bcrnn import backend
from bcrnn.circulant import SpectralWeights, matvec_decoupled, random_block_circulant


def time_call(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_matvec(size, repeats):
    rng = np.random.default_rng(0)
    print(f"\ndecoupled matvec, {size}x{size} matrix (best of {repeats})")
    print(f"{'block':>6} {'python':>12} {'compiled':>12} {'speedup':>8}")
    for block in (4, 8, 16, 32, 64):
        if size % block:
            continue
        matrix = random_block_circulant(rng, size, size, block)
        x = rng.normal(size=size)
        row = {}
        for name in backend.available_backends():
            with backend.use(name):
                weights = SpectralWeights.from_matrix(matrix)
                row[name] = time_call(lambda: matvec_decoupled(weights, x), repeats)
        speed = row["python"] / row["compiled"] if "compiled" in row else float("nan")
        compiled = f"{row.get('compiled', float('nan')) * 1e6:10.1f}us"
        print(f"{block:>6} {row['python'] * 1e6:10.1f}us {compiled} {speed:7.2f}x")


def bench_transforms(repeats):
    rng = np.random.default_rng(1)
    print(f"\nsingle forward transform (best of {repeats})")
    print(f"{'length':>6} {'python':>12} {'compiled':>12} {'speedup':>8}")
    for length in (8, 32, 128, 1024, 8192):
        x = rng.normal(size=length)
        row = {}
        for name in backend.available_backends():
            kern = backend._BACKENDS[name]
            kern.rfft(x)  # warm the twiddle cache
            row[name] = time_call(lambda: kern.rfft(x), repeats)
        speed = row["python"] / row["compiled"] if "compiled" in row else float("nan")
        compiled = f"{row.get('compiled', float('nan')) * 1e6:10.2f}us"
        print(f"{length:>6} {row['python'] * 1e6:10.2f}us {compiled} {speed:7.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--size", type=int, default=1024)
    args = parser.parse_args()
    print(f"available backends: {backend.available_backends()}")
    bench_matvec(args.size, args.repeats)
    bench_transforms(args.repeats)


if __name__ == "__main__":
    main()
