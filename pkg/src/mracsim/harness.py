"""Run orchestration: single runs, comparison sweeps, report assembly.

compare fans independent (law, seed) runs across a process pool and
assembles the report single-threaded afterwards; results are sorted, so
the report does not depend on completion order.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .acc import simulate_acc
from .errors import ConfigError
from .mrac import simulate_mrac
from .scenario import Scenario, validate_flat
from .trace import SimTrace

ORDERING_METRIC = "rms_speed_error"


def run_scenario(scenario: Scenario, backend=None) -> SimTrace:
    """Dispatch one scenario to the right simulator; annotate provenance."""
    if scenario.mode == "acc":
        vehicle, spacing, refmodel, lead, law, cfg = scenario.build_acc()
        cfg.backend = backend
        trace = simulate_acc(vehicle, spacing, refmodel, lead, law, cfg)
    else:
        plant, refmodel, law, reference, cfg = scenario.build_mrac()
        cfg.backend = backend
        trace = simulate_mrac(plant, refmodel, law, reference, cfg)
    trace.metadata["scenario"] = scenario.name
    trace.metadata["scenario_hash"] = scenario.hash()
    trace.metadata["version"] = __version__
    return trace


def run(scenario: Scenario, out_dir=None, backend=None):
    """Run and optionally persist trace.csv + summary.json into out_dir."""
    trace = run_scenario(scenario, backend=backend)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        trace.write_csv(out / "trace.csv")
        trace.write_summary(out / "summary.json")
    return trace


def _compare_worker(args):
    flat, law, seed, backend = args
    scenario = validate_flat(dict(flat)).with_overrides(law=law, seed=seed)
    trace = run_scenario(scenario, backend=backend)
    return law, seed, trace


_METRIC_KEYS = (
    "rms_speed_error", "rms_spacing_error", "max_accel", "max_jerk",
    "settle_time", "max_abs_e1", "mean_abs_e1_last10pct",
    "theta_tilde_final_norm",
)


def compare(scenario: Scenario, laws, seeds, out_dir=None, workers=None,
            backend=None):
    """Run every (law, seed) pair off one scenario base and rank the laws.

    Returns the report dict; with out_dir also writes report.json, the
    combined per-run metrics CSV, and one trace CSV per run.
    """
    laws = list(laws)
    seeds = [int(s) for s in seeds]
    if len(laws) < 2 and len(seeds) < 2:
        raise ConfigError("compare needs at least 2 laws or at least 2 seeds")
    for law in laws:
        if law not in ("gradient", "rls"):
            raise ConfigError(f"unknown law {law!r}")

    base_hash = scenario.hash()
    jobs = [(tuple(sorted(scenario.flat.items())), law, seed, backend)
            for law in laws for seed in seeds]
    jobs = [(dict(flat), law, seed, be) for flat, law, seed, be in jobs]
    if workers is None:
        workers = min(os.cpu_count() or 1, len(jobs))
    results = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_compare_worker, jobs):
                results.append(res)
    else:
        for job in jobs:
            results.append(_compare_worker(job))
    results.sort(key=lambda r: (laws.index(r[0]), r[1]))

    rows = []
    for law, seed, trace in results:
        if trace.metadata["scenario_hash"] != scenario.with_overrides(
            law=law, seed=seed
        ).hash():
            raise ConfigError("inconsistent scenario bases across compare runs")
        row = {"law": law, "seed": seed}
        for key in _METRIC_KEYS:
            if key in trace.metrics:
                row[key] = trace.metrics[key]
        rows.append(row)

    per_law = {}
    for law in dict.fromkeys(laws):
        vals = [r[ORDERING_METRIC] for r in rows
                if r["law"] == law and ORDERING_METRIC in r]
        if vals:
            per_law[law] = {
                "mean_" + ORDERING_METRIC: float(np.mean(vals)),
                "median_" + ORDERING_METRIC: float(np.median(vals)),
            }

    ordering = None
    if "gradient" in laws and "rls" in laws and scenario.mode == "acc":
        wins = 0
        for seed in seeds:
            g = next(r[ORDERING_METRIC] for r in rows
                     if r["law"] == "gradient" and r["seed"] == seed)
            l = next(r[ORDERING_METRIC] for r in rows
                     if r["law"] == "rls" and r["seed"] == seed)
            wins += l <= g
        ordering = {
            "metric": ORDERING_METRIC,
            "rls_wins": wins,
            "n_seeds": len(seeds),
            "verdict": "rls" if wins * 2 >= len(seeds) else "gradient",
        }

    report = {
        "scenario": scenario.name,
        "scenario_hash": base_hash,
        "version": __version__,
        "laws": laws,
        "seeds": seeds,
        "rows": rows,
        "per_law": per_law,
        "ordering": ordering,
    }

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        keys = ["law", "seed"] + [k for k in _METRIC_KEYS
                                  if any(k in r for r in rows)]
        with open(out / "combined.csv", "w") as fh:
            fh.write(",".join(keys) + "\n")
            for r in rows:
                cells = []
                for k in keys:
                    v = r.get(k)
                    cells.append("" if v is None else
                                 (str(v) if isinstance(v, (int, str))
                                  else repr(float(v))))
                fh.write(",".join(cells) + "\n")
        import json

        with open(out / "report.json", "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for law, seed, trace in results:
            trace.write_csv(out / f"trace_{law}_s{seed}.csv")
    return report
