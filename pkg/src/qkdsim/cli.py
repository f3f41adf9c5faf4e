"""Command-line entry point.

Exit codes: 0 success, 1 simulation failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from qkdsim.errors import ConfigurationError, QkdSimError
from qkdsim.fixtures import verify_fixtures
from qkdsim.scenario import load_scenario, output_paths, run_scenario

EXIT_OK = 0
EXIT_SIM_FAILURE = 1
EXIT_CONFIG = 2


def _load(args):
    try:
        scenario = load_scenario(args.scenario)
    except OSError as exc:
        print(f"error: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return None
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None
    if getattr(args, "seed", None) is not None:
        scenario = scenario.with_seed(args.seed)
    return scenario


def cmd_validate(args) -> int:
    scenario = _load(args)
    if scenario is None:
        return EXIT_CONFIG
    print(f"{args.scenario}: ok (seed {scenario.seed}, {scenario.traffic.pattern.packet_count} packets)")
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = _load(args)
    if scenario is None:
        return EXIT_CONFIG
    try:
        report = run_scenario(scenario, args.out_dir)
    except (OSError, QkdSimError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIM_FAILURE
    summary = report.to_dict()
    summary["outputs"] = {k: str(v) for k, v in output_paths(scenario, args.out_dir).items()}
    print(json.dumps(summary, indent=2))
    if report.failure:
        print(f"run aborted: {report.failure}", file=sys.stderr)
    for err in report.errors:
        print(err.describe(), file=sys.stderr)
    return report.exit_status


def cmd_verify_fixtures(args) -> int:
    results = verify_fixtures(args.root)
    for r in results:
        line = f"{'PASS' if r.passed else 'FAIL'} {r.name}"
        if r.message:
            line += f": {r.message}"
        print(line)
    return EXIT_OK if all(r.passed for r in results) else EXIT_SIM_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdsim", description="Simulate a QKD-secured node pair.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario")
    run.add_argument("scenario", type=Path)
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--out-dir", type=Path, help="write outputs here instead of the scenario's paths")
    run.set_defaults(func=cmd_run)

    validate = sub.add_parser("validate", help="parse and validate a scenario without running it")
    validate.add_argument("scenario", type=Path)
    validate.add_argument("--seed", type=int, help="override the scenario seed")
    validate.set_defaults(func=cmd_validate)

    fixtures = sub.add_parser("verify-fixtures", help="rerun golden fixtures and compare outputs")
    fixtures.add_argument("root", type=Path, nargs="?", default=Path("fixtures"))
    fixtures.set_defaults(func=cmd_verify_fixtures)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
