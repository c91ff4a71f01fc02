#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Runs shipped presets on both backends, reports wall time, steps/second,
speedup, and the worst trace-column deviation between the two.

Usage:
    python benchmarks/bench_backends.py [--t-final 60] [--repeat 3]
"""

import argparse
import time

import numpy as np

from mracsim import _kernels
from mracsim.harness import run_scenario
from mracsim.scenario import load_scenario, validate_flat

PRESETS = ("acc_paper_compare", "acc_lyapunov", "mrac_first_order",
           "mrac_second_order")


def bench_one(preset, t_final, repeat):
    sc = load_scenario(preset)
    sc.flat["sim.t_final"] = float(t_final)
    sc = validate_flat(sc.flat)
    n_steps = int(round(t_final / sc.flat["sim.dt"]))
    rows = {}
    traces = {}
    for backend in _kernels.available_backends():
        best = float("inf")
        for _ in range(repeat):
            t0 = time.perf_counter()
            traces[backend] = run_scenario(sc, backend=backend)
            best = min(best, time.perf_counter() - t0)
        rows[backend] = best
    line = f"{preset:22s} steps={n_steps:>7d}"
    for backend, wall in rows.items():
        line += f"  {backend}: {wall:8.3f}s ({n_steps / wall:10.0f} steps/s)"
    if len(rows) == 2:
        line += f"  speedup x{rows['python'] / rows['compiled']:.1f}"
        worst = 0.0
        tp, tc = traces["python"], traces["compiled"]
        for col in tp.columns:
            a, b = tp.data[col], tc.data[col]
            mask = ~(np.isnan(a) & np.isnan(b))
            if mask.any():
                scale = np.maximum(1.0, np.abs(a[mask]))
                worst = max(worst, float(np.max(np.abs(a[mask] - b[mask]) / scale)))
        line += f"  max rel dev {worst:.2e}"
    print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--t-final", type=float, default=60.0)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--preset", action="append", default=None)
    args = parser.parse_args()
    print("available backends:", ", ".join(_kernels.available_backends()))
    for preset in args.preset or PRESETS:
        bench_one(preset, args.t_final, args.repeat)


if __name__ == "__main__":
    main()
