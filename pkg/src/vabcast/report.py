"""Verdict assembly: every property gets PASS / FAIL(witness) / NOT-EVALUATED."""

from __future__ import annotations

from typing import Optional

from . import checker
from .model import Mode
from .monitors import Violation
from .replication import MACHINES
from .scenario import LivenessPremise, Scenario, compute_premise

_MONITOR_PROPS = (
    "Inv1", "Inv3", "Inv4", "Inv5", "Inv6", "Inv7", "Inv8",
    "CommitMsg", "CommitPos", "ProbeUnderflow",
)
_LIVENESS_PROPS = ("P5-Termination", "P5a", "P5b", "P5c")


def offline_violations(history, mode: Mode) -> list[Violation]:
    out = checker.check_basic_config(history)
    out += checker.check_safety(history)
    if mode in (Mode.PO, Mode.SPO):
        out += checker.check_primary_order(history, mode)
    if mode is Mode.SPO:
        out += checker.check_speculative(history)
    return out


def _property_rows(mode: Mode) -> list[str]:
    rows = ["P1a", "P1b", "P1c", "P1d", "WF",
            "P2-Integrity", "P3-TotalOrder", "P4-Agreement"]
    if mode in (Mode.PO, Mode.SPO):
        rows += ["P6-LocalOrder", "P7-GlobalOrder"]
    if mode is Mode.PO:
        rows += ["P8-PrimaryIntegrity"]
    if mode is Mode.SPO:
        rows += ["P9-SpecDelivery", "P10a", "P10b"]
    return rows


def _rows_from(props: list[str], violations: list[Violation]) -> list[dict]:
    by_prop: dict[str, list[Violation]] = {}
    for v in violations:
        by_prop.setdefault(v.prop, []).append(v)
    rows = []
    for prop in props:
        found = by_prop.get(prop, [])
        row = {"id": prop, "status": "FAIL" if found else "PASS"}
        if found:
            row["witness"] = found[0].as_dict()
            row["count"] = len(found)
        rows.append(row)
    return rows


def evaluate_run(result, premise: Optional[LivenessPremise] = None) -> dict:
    """Full verdict report for a simulated run (history + monitors + liveness
    + replication checks).  Returns {"properties": rows, "violations": n}."""
    scenario: Scenario = result.scenario
    mode = scenario.mode
    if premise is None:
        premise = compute_premise(scenario)
    violations = offline_violations(result.history, mode) + list(result.violations)

    rows = _rows_from(_property_rows(mode), violations)
    rows += _rows_from(list(_MONITOR_PROPS), violations)

    liveness_reason = None
    if premise is None:
        liveness_reason = "no reconfiguration in scenario"
    elif not premise.holds:
        liveness_reason = "liveness premise does not hold for this scenario"
    elif not result.quiescent:
        liveness_reason = "run not quiescent"
    if liveness_reason is None:
        live = checker.check_liveness(result.history, premise)
        violations += live
        rows += _rows_from(list(_LIVENESS_PROPS), live)
    else:
        rows += [
            {"id": p, "status": "NOT_EVALUATED", "reason": liveness_reason}
            for p in _LIVENESS_PROPS
        ]

    if scenario.app is not None:
        inv2 = [v for v in result.violations if v.prop == "Inv2"]
        rows.append({
            "id": "Inv2",
            "status": "FAIL" if inv2 else "PASS",
            **({"witness": inv2[0].as_dict()} if inv2 else {}),
        })
        if result.quiescent:
            status, witness = checker.check_linearizable(
                result.ops, MACHINES[scenario.app]
            )
        else:
            status = "not-evaluated"
        if status == "not-evaluated":
            rows.append({"id": "Linearizable", "status": "NOT_EVALUATED",
                         "reason": "too many operations or non-quiescent run"})
        elif status == "ok":
            rows.append({"id": "Linearizable", "status": "PASS"})
        else:
            rows.append({"id": "Linearizable", "status": "FAIL"})
            violations.append(Violation(
                "Linearizable", "no sequential witness for the client history", {}
            ))

    fail_count = sum(1 for r in rows if r["status"] == "FAIL")
    return {
        "properties": rows,
        "violations": [v.as_dict() for v in violations],
        "fail_count": fail_count,
        "quiescent": result.quiescent,
    }


def evaluate_history(history, mode: Mode) -> dict:
    """Offline re-check of a trace: history properties only; monitors and
    liveness cannot be re-derived from the trace alone."""
    violations = offline_violations(history, mode)
    rows = _rows_from(_property_rows(mode), violations)
    rows += [
        {"id": p, "status": "NOT_EVALUATED", "reason": "requires a live run"}
        for p in _MONITOR_PROPS
    ]
    rows += [
        {"id": p, "status": "NOT_EVALUATED",
         "reason": "liveness premise unavailable offline"}
        for p in _LIVENESS_PROPS
    ]
    fail_count = sum(1 for r in rows if r["status"] == "FAIL")
    return {
        "properties": rows,
        "violations": [v.as_dict() for v in violations],
        "fail_count": fail_count,
    }
