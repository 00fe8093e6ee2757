"""Seeded fuzz campaigns.

Each seed derives one random admissible scenario, runs it, and evaluates the
full verdict report.  On histories small enough (at most eight deliveries) the
optimized safety checker is cross-checked against the direct quantifier
enumeration.  A campaign is clean when no seed produced a FAIL verdict and no
cross-check mismatched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .checker import brute_force_safety, check_safety, safety_flags
from .harness import run_scenario
from .model import DELIVER, Mode
from .report import evaluate_run
from .scenario import (
    Scenario,
    chaos_scenario,
    compute_premise,
    mutant_scenario,
    random_scenario,
)


@dataclass
class CampaignSummary:
    runs: int = 0
    failures: list[tuple[int, list[str]]] = field(default_factory=list)
    first_witness: Optional[dict] = None
    crosscheck_runs: int = 0
    crosscheck_mismatches: list[int] = field(default_factory=list)
    premise_runs: int = 0
    quiescent_runs: int = 0

    @property
    def clean(self) -> bool:
        return not self.failures and not self.crosscheck_mismatches

    def failed_props(self) -> set[str]:
        out: set[str] = set()
        for _, props in self.failures:
            out.update(props)
        return out


def scenario_for(kind: str, seed: int, mode: Mode, app: Optional[str] = None) -> Scenario:
    if kind == "safety":
        # every third seed is an adversarial one: overlapping
        # reconfigurations, mid-window crashes, wider delay jitter
        if seed % 3 == 2:
            return chaos_scenario(seed, mode)
        return random_scenario(seed, mode, premise=False, app=app)
    if kind == "chaos":
        return chaos_scenario(seed, mode)
    if kind == "liveness":
        return random_scenario(seed, mode, premise=True, app=app)
    if kind == "mutant":
        # alternate premise-satisfying runs (liveness-visible bugs) with runs
        # that force probing across a dead epoch (safety-visible bugs)
        if seed % 2 == 0:
            return random_scenario(seed, mode, premise=True)
        return mutant_scenario(seed, mode)
    if kind == "replication":
        return random_scenario(seed, mode, premise=(seed % 3 == 0), app=app)
    raise ValueError(f"unknown campaign kind {kind!r}")


def fuzz_campaign(
    n_seeds: int,
    mode: Mode,
    kind: str = "safety",
    mutation: Optional[str] = None,
    app: Optional[str] = None,
    base_seed: int = 0,
    crosscheck: bool = True,
    stop_on_failure: bool = False,
) -> CampaignSummary:
    summary = CampaignSummary()
    for s in range(n_seeds):
        seed = base_seed + s
        scenario = scenario_for(kind, seed, mode, app=app)
        result = run_scenario(scenario, mutation=mutation)
        report = evaluate_run(result)
        summary.runs += 1
        if result.quiescent:
            summary.quiescent_runs += 1
        premise = compute_premise(scenario)
        if premise is not None and premise.holds:
            summary.premise_runs += 1
        failed = [r["id"] for r in report["properties"] if r["status"] == "FAIL"]
        if failed:
            summary.failures.append((seed, failed))
            if summary.first_witness is None:
                summary.first_witness = {
                    "seed": seed,
                    "scenario": scenario.name,
                    "violations": report["violations"][:3],
                }
            if stop_on_failure:
                break
        if crosscheck:
            n_deliver = sum(1 for ev in result.history if ev.kind == DELIVER)
            if n_deliver <= 8:
                summary.crosscheck_runs += 1
                fast = safety_flags(check_safety(result.history))
                slow = brute_force_safety(result.history)
                if fast != slow:
                    summary.crosscheck_mismatches.append(seed)
    return summary
