"""Benchmark the Monte Carlo counting kernels.

Times every installed backend on the same trial configuration and checks
that they produce identical count matrices (they share one counter-based
random number contract, so the agreement is exact, not statistical).

Usage::

    python benchmarks/bench_kernels.py [--trials N] [--p P] [--repeat R]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from srfock._kernels import available_backends
from srfock.detection import DetectionTree
from srfock.simulate import TrialConfig, run_trials
from srfock.source import PairSource


def build_config(p: float, trials: int, seed: int) -> TrialConfig:
    return TrialConfig(
        source=PairSource(p),
        field1_tree=DetectionTree.balanced(2, 0.4, dark_prob=1e-4),
        field2_tree=DetectionTree.balanced(4, 0.03, dark_prob=1e-4),
        n_trials=trials,
        seed=seed,
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=2_000_000)
    ap.add_argument("--p", type=float, default=0.05)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=20260818)
    args = ap.parse_args()

    config = build_config(args.p, args.trials, args.seed)
    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    print(f"{args.trials:,} trials, p = {args.p}, best of {args.repeat}")

    counts = {}
    for backend in backends:
        best = float("inf")
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            table = run_trials(config, backend=backend)
            best = min(best, time.perf_counter() - t0)
        counts[backend] = np.asarray(table.counts)
        rate = args.trials / best
        print(f"  {backend:9s} {best:8.3f} s   {rate / 1e6:8.2f} M trials/s")

    if len(backends) == 2:
        same = np.array_equal(counts[backends[0]], counts[backends[1]])
        print(f"count matrices identical: {same}")
        if not same:
            raise SystemExit("backend mismatch: kernels disagree")
    else:
        print("only one backend installed; no cross-check")


if __name__ == "__main__":
    main()
