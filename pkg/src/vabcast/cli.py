"""Command-line entry point.

Verbs:
  run     -- execute a scenario; write trace.jsonl, metrics.json, verdicts.json
  check   -- re-run the offline checkers on an existing trace
  fuzz    -- seeded random campaign; reports the first failing seed + witness
  metrics -- run a scenario and print its metrics report

Exit status: 0 clean, 1 property violations, 2 usage/validation errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .fuzz import fuzz_campaign
from .harness import run_scenario
from .model import Mode
from .report import evaluate_history, evaluate_run
from .scenario import BUNDLED_NAMES, Scenario, ScenarioError, bundled
from .trace import TraceError, read_trace, serialize_history


def _load_scenario(spec: str, mode: str | None, seed: int | None) -> Scenario:
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc
        scenario = Scenario.from_dict(obj, name=os.path.basename(spec))
    else:
        scenario = bundled(spec)
    if mode is not None:
        scenario = dataclasses.replace(scenario, mode=Mode(mode))
    if seed is not None:
        scenario = dataclasses.replace(scenario, seed=seed)
    scenario.validate()
    return scenario


def _print_verdicts(report: dict) -> None:
    for row in report["properties"]:
        line = f"{row['id']:<20} {row['status']}"
        if row["status"] == "NOT_EVALUATED":
            line += f"  ({row.get('reason', '')})"
        elif row["status"] == "FAIL":
            line += f"  {row.get('witness', {}).get('message', '')}"
        print(line)


def cmd_run(args) -> int:
    scenario = _load_scenario(args.scenario, args.mode, args.seed)
    result = run_scenario(scenario, mutation=args.mutant)
    report = evaluate_run(result)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "trace.jsonl"), "w", encoding="utf-8") as fh:
        fh.write(serialize_history(result.history))
    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
        json.dump(result.metrics, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(args.out, "verdicts.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    _print_verdicts(report)
    print(f"history: {len(result.history)} actions, clock {result.clock}, "
          f"quiescent={result.quiescent}")
    return 0 if report["fail_count"] == 0 else 1


def cmd_check(args) -> int:
    try:
        history = read_trace(args.trace)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = evaluate_history(history, Mode(args.mode))
    _print_verdicts(report)
    return 0 if report["fail_count"] == 0 else 1


def cmd_fuzz(args) -> int:
    summary = fuzz_campaign(
        args.seeds,
        Mode(args.mode),
        kind=args.kind,
        mutation=args.mutant,
        app=args.app,
        base_seed=args.base_seed,
        stop_on_failure=args.stop_on_failure,
    )
    print(f"ran {summary.runs} scenarios ({summary.quiescent_runs} quiescent, "
          f"{summary.premise_runs} premise-satisfying)")
    print(f"crosscheck: {summary.crosscheck_runs} histories, "
          f"{len(summary.crosscheck_mismatches)} mismatches")
    if summary.clean:
        print("no violations")
        return 0
    if summary.failures:
        seed, props = summary.failures[0]
        print(f"violations in {len(summary.failures)} run(s); first seed {seed}: {props}")
        print(json.dumps(summary.first_witness, indent=2, default=str))
    if summary.crosscheck_mismatches:
        print(f"brute-force mismatch at seeds {summary.crosscheck_mismatches[:5]}")
    return 1


def cmd_metrics(args) -> int:
    scenario = _load_scenario(args.scenario, args.mode, args.seed)
    result = run_scenario(scenario)
    print(json.dumps(result.metrics, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vabcast",
        description="reconfigurable atomic broadcast simulator and history checker",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and check it")
    p_run.add_argument("--scenario", required=True,
                       help=f"scenario file or bundled name {BUNDLED_NAMES}")
    p_run.add_argument("--mode", choices=["vab", "po", "spo"], default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=".")
    p_run.add_argument("--mutant", default=None,
                       choices=["skip-probing", "no-commit-replay", "leader-any"],
                       help="deliberately broken build for checker-sensitivity runs")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="re-check an existing trace")
    p_check.add_argument("--trace", required=True)
    p_check.add_argument("--mode", choices=["vab", "po", "spo"], default="vab")
    p_check.set_defaults(func=cmd_check)

    p_fuzz = sub.add_parser("fuzz", help="seeded random scenario campaign")
    p_fuzz.add_argument("--seeds", type=int, required=True)
    p_fuzz.add_argument("--mode", choices=["vab", "po", "spo"], default="vab")
    p_fuzz.add_argument("--kind", default="safety",
                        choices=["safety", "liveness", "mutant", "replication"])
    p_fuzz.add_argument("--mutant", default=None,
                        choices=["skip-probing", "no-commit-replay", "leader-any"])
    p_fuzz.add_argument("--app", default=None, choices=["counter", "random_assign"])
    p_fuzz.add_argument("--base-seed", type=int, default=0)
    p_fuzz.add_argument("--stop-on-failure", action="store_true")
    p_fuzz.set_defaults(func=cmd_fuzz)

    p_metrics = sub.add_parser("metrics", help="run a scenario and print metrics")
    p_metrics.add_argument("--scenario", required=True)
    p_metrics.add_argument("--mode", choices=["vab", "po", "spo"], default=None)
    p_metrics.add_argument("--seed", type=int, default=None)
    p_metrics.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
