"""Benchmark the JIT kernels against the pure-numpy fallback.

Runs each hot kernel under both backends (worker subprocesses pick the
path via MACCOOP_BACKEND) and prints mean wall time per call plus the
speedup.  Usage:

    python benchmarks/bench_kernels.py [--runs N]
    python benchmarks/bench_kernels.py --backend numpy --json   # worker
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _bench(fn, *, warmup=2, runs=20):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.mean(times)), float(np.std(times))


def run_worker(runs: int) -> dict:
    from maccoop import _kernels as K

    rng = np.random.default_rng(0)
    results: dict[str, tuple[float, float]] = {}

    # waterfilling: 200 random 4x6 channels against colored noise
    channels = [rng.normal(size=(4, 6)) for _ in range(200)]
    noises = []
    for _ in range(200):
        a = rng.normal(size=(4, 4))
        noises.append(a @ a.T + np.eye(4))

    def waterfill_batch():
        for h, nc in zip(channels, noises):
            K.waterfill(h, nc, 2.0)

    results["waterfill x200"] = _bench(waterfill_batch, runs=runs)

    # per-antenna ascent on a 2x4 channel
    h_pa = rng.normal(size=(2, 4))
    caps = rng.uniform(0.5, 1.5, size=4)
    q0 = np.diag(caps)

    def pa():
        K.pa_maximize(h_pa, np.eye(2), caps, q0, 1e-8, 100_000, 1e-11, 2000)

    results["per-antenna ascent"] = _bench(pa, runs=runs)

    # fixed-order backward sweep, 4 blocks, 2 rx antennas
    widths = [1, 2, 1, 2]
    h_cat = rng.normal(size=(2, sum(widths)))
    offs = np.array([0, *np.cumsum(widths)], dtype=np.int64)
    p_blk = np.ones(4)
    zeros = np.zeros((sum(widths), sum(widths)))

    def sic():
        for _ in range(50):
            K.sic_backward(1.0, 2, h_cat, offs, 0, p_blk, np.zeros(6), zeros,
                           1e-8, 100_000, 1e-11, 2000)

    results["cancellation sweep x50"] = _bench(sic, runs=runs)

    # best-response fixed point on the same game
    def sud():
        for _ in range(10):
            K.sud_fixed_point(1.0, 2, h_cat, offs, 0, p_blk, np.zeros(6), zeros,
                              0.5, 1e-9, 10_000, 1e-8, 100_000, 1e-11, 2000)

    results["best-response fixed point x10"] = _bench(sud, runs=runs)

    # whole-table closed form for 8 users (4140 partitions)
    from maccoop.model import enumerate_partitions

    parts = np.array([p.rgs for p in enumerate_partitions(8)], dtype=np.int64)
    slot = np.arange(8, dtype=np.float64)
    ones = np.ones(8)
    table_fn = (K.single_rx_table if K.BACKEND == "numba" else K.single_rx_table_numpy)

    def table():
        table_fn(parts, slot, ones, ones, ones, 0, 1.0)

    results["8-user utility table"] = _bench(table, runs=runs)
    return {"backend": K.BACKEND, "results": results}


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--runs", type=int, default=20)
    parser.add_argument("--backend", choices=["numba", "numpy"])
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args()

    if args.json:
        print(json.dumps(run_worker(args.runs)))
        return 0

    reports = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, MACCOOP_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--json",
             "--runs", str(args.runs)],
            capture_output=True, text=True, env=env, check=True,
        )
        payload = json.loads(proc.stdout.strip().splitlines()[-1])
        if payload["backend"] != backend:
            print(f"warning: requested {backend}, worker ran {payload['backend']}")
        reports[backend] = payload["results"]

    width = max(len(k) for k in reports["numpy"])
    print(f"{'kernel':<{width}}  {'numpy':>12}  {'numba':>12}  speedup")
    for name in reports["numpy"]:
        np_mean, _ = reports["numpy"][name]
        nb_mean, _ = reports["numba"][name]
        speedup = np_mean / nb_mean if nb_mean > 0 else float("inf")
        print(f"{name:<{width}}  {np_mean * 1e3:>10.3f}ms  {nb_mean * 1e3:>10.3f}ms  "
              f"{speedup:>6.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
