"""Command-line interface.

Subcommands: run, compare, validate, presets. Exit codes are scriptable:
0 success, 2 configuration/validation failure, 3 numerical halt,
4 assumption violation.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import AssumptionError, ConfigError, MatchingError, NumericsError
from .harness import compare, run
from .scenario import list_presets, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ASSUMPTION = 4


def _parse_seeds(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ConfigError(f"--seeds: could not parse {text!r}")
    return out


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="mracsim",
        description="Adaptive-control simulation harness "
        "(gradient and RLS laws, generic plants and vehicle following)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("--config", required=True,
                       help="scenario file or preset name")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--law", choices=("gradient", "rls"), default=None)
    p_run.add_argument("--analysis-mode", action="store_true", default=None)
    p_run.add_argument("--backend", choices=("python", "compiled"), default=None)

    p_cmp = sub.add_parser("compare", help="sweep laws x seeds off one scenario")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--laws", default="gradient,rls",
                       help="comma list, e.g. gradient,rls")
    p_cmp.add_argument("--seeds", default="1..10",
                       help="comma list or a..b range")
    p_cmp.add_argument("--out", default=None)
    p_cmp.add_argument("--workers", type=int, default=None)
    p_cmp.add_argument("--backend", choices=("python", "compiled"), default=None)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("--config", required=True)

    p_pre = sub.add_parser("presets", help="preset utilities")
    p_pre.add_argument("action", choices=("list",))
    return parser


def _cmd_run(args):
    scenario = load_scenario(args.config).with_overrides(
        seed=args.seed, law=args.law, analysis=args.analysis_mode
    )
    trace = run(scenario, out_dir=args.out, backend=args.backend)
    summary = {
        "scenario": scenario.name,
        "law": trace.metadata["law"],
        "seed": trace.metadata["seed"],
        "backend": trace.metadata["backend"],
        "rows": trace.n_rows,
    }
    for key, val in sorted(trace.metrics.items()):
        if isinstance(val, (int, float)) or val is None:
            summary[key] = val
    print(json.dumps(summary, indent=2, default=str))
    if args.out:
        print(f"wrote {args.out}/trace.csv and {args.out}/summary.json",
              file=sys.stderr)
    return EXIT_OK


def _cmd_compare(args):
    scenario = load_scenario(args.config)
    laws = [s.strip() for s in args.laws.split(",") if s.strip()]
    seeds = _parse_seeds(args.seeds)
    report = compare(scenario, laws, seeds, out_dir=args.out,
                     workers=args.workers, backend=args.backend)
    print(json.dumps(
        {k: report[k] for k in ("scenario", "per_law", "ordering")},
        indent=2, default=str,
    ))
    if args.out:
        print(f"wrote {args.out}/report.json, combined.csv, and trace CSVs",
              file=sys.stderr)
    return EXIT_OK


def _cmd_validate(args):
    scenario = load_scenario(args.config)
    print(f"{scenario.name}: schema OK (mode={scenario.mode}, "
          f"law={scenario.law})")
    if scenario.mode == "generic-mrac":
        from .matching import validate_problem

        plant, refmodel, _, _, cfg = scenario.build_mrac()
        report = validate_problem(plant, refmodel, cfg.n or plant.order)
        print(report)
        report.require()
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "presets":
            for name, desc in list_presets():
                print(f"{name:28s} {desc}")
            return EXIT_OK
    except ConfigError as ex:
        print(f"configuration error: {ex}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssumptionError, MatchingError) as ex:
        print(f"assumption violation: {ex}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except NumericsError as ex:
        print(f"numerical halt: {ex}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
