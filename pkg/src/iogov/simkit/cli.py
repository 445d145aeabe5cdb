"""Command-line interface: run scenarios, list the catalog, compare runs.

Exit codes: 0 success, 2 configuration error, 3 invariant violation
detected during a run.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .engine import InvariantViolation
from .reports import compare_runs
from .scenario import ConfigError, load_scenario_file, run_scenario, save_scenario_file
from .scenarios import scenario_suite


def _cmd_run(args) -> int:
    suite = scenario_suite()
    runs: list[tuple[str, dict]] = []
    if args.scenario in suite:
        family = suite[args.scenario]
        if args.variant:
            runs = [(args.variant, family.variant(args.variant))]
        else:
            runs = [(label, family.variant(label)) for label, _ in family.variants]
    else:
        cfg = load_scenario_file(args.scenario)
        runs = [(cfg.get("name", Path(args.scenario).stem), cfg)]

    outdir = Path(args.out)
    multi = len(runs) > 1
    for label, cfg in runs:
        target = outdir / label if multi else outdir
        result = run_scenario(
            cfg,
            seed=args.seed,
            outdir=target,
            scheduler=args.scheduler,
            objective=args.objective,
            duration_s=args.duration_s,
            trace=args.trace,
            audit=args.audit,
            figures=not args.no_figures,
        )
        audit = result.doc["audit"]
        print(
            f"{result.name} [{label}] seed={args.seed}: "
            f"{audit['completed']}/{audit['generated']} requests completed, "
            f"reports in {target}"
        )
    return 0


def _cmd_list(_args) -> int:
    for name, family in scenario_suite().items():
        labels = ", ".join(label for label, _ in family.variants)
        print(f"{name:24s} {family.description}  [variants: {labels}]")
    return 0


def _cmd_compare(args) -> int:
    table = compare_runs(Path(args.run_a), Path(args.run_b))
    sys.stdout.write(table)
    if args.out:
        Path(args.out).write_text(table)
    return 0


def _cmd_export(args) -> int:
    suite = scenario_suite()
    if args.scenario not in suite:
        raise ConfigError(f"unknown scenario {args.scenario!r}")
    family = suite[args.scenario]
    label = args.variant or family.variants[0][0]
    save_scenario_file(family.variant(label), args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="iogov",
        description="hierarchical, tag-aware I/O governance simulator",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario file or built-in scenario")
    run.add_argument("scenario", help="scenario file path or built-in name")
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--out", default="runs/out", help="report directory")
    run.add_argument("--variant", help="single variant of a built-in family")
    run.add_argument("--scheduler", choices=["iorm", "bypass"], default=None)
    run.add_argument(
        "--objective",
        choices=["auto", "low-latency", "high-throughput", "balanced"],
        default=None,
    )
    run.add_argument("--duration-s", type=float, default=None)
    run.add_argument("--trace", action="store_true", help="write trace.log")
    run.add_argument("--audit", action="store_true", help="per-request audit")
    run.add_argument("--no-figures", action="store_true")
    run.set_defaults(fn=_cmd_run)

    ls = sub.add_parser("list-scenarios", help="list the built-in catalog")
    ls.set_defaults(fn=_cmd_list)

    cmp_ = sub.add_parser("compare", help="ratio/degradation table for two runs")
    cmp_.add_argument("run_a")
    cmp_.add_argument("run_b")
    cmp_.add_argument("--out", default=None)
    cmp_.set_defaults(fn=_cmd_compare)

    exp = sub.add_parser("export-scenario", help="write a built-in scenario to YAML")
    exp.add_argument("scenario")
    exp.add_argument("out")
    exp.add_argument("--variant", default=None)
    exp.set_defaults(fn=_cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
