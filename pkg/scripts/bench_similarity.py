#!/usr/bin/env python3
"""Benchmark the blocked similarity kernel at deployment scale.

Times similarity_matrix on a 4096-prototype x 4096-query problem with
17 x 384 enhanced channels (the full-resolution configuration) and on the
reduced 1024 x 1024, 17 x 64 configuration.

Usage:
    python scripts/bench_similarity.py [--repeats 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from okp.features import FeatureMap, GridGeometry
from okp.matching import similarity_matrix


def random_map(rng: np.random.Generator, side: int, d: int) -> FeatureMap:
    geom = GridGeometry(
        src_w=(side - 1) * 4 + 8, src_h=(side - 1) * 4 + 8, patch=8, stride=4
    )
    return FeatureMap(rng.normal(size=(side, side, d)).astype(np.float32), geom)


def bench(p: int, q: int, d: int, repeats: int) -> float:
    rng = np.random.default_rng(0)
    side = int(round(p ** 0.5))
    a = random_map(rng, side, d)
    b = random_map(rng, side, d)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        similarity_matrix(a, b)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    for label, p, d in (("reduced", 1024, 17 * 64), ("full", 4096, 17 * 384)):
        t = bench(p, p, d, args.repeats)
        print(f"{label:8s} P={p} D_B={d}: {t:.3f} s")


if __name__ == "__main__":
    main()
