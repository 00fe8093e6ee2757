"""Scenario files: what a run does and when.

A scenario fixes the mode, the process universe, the epoch-0 bootstrap
configuration, a schedule of timed directives (broadcast / execute / crash /
reconfigure), the channel delay range and the seed.  Validation is static and
rejects fault plans that could leave an introduced configuration without a
surviving member (conservatively: the initial configuration and every desired
member set must contain a process that never crashes).

Also here: the liveness premise computed from a scenario (never from a trace),
the bundled scenarios used by the command-line tool and the acceptance suite,
and the random scenario generators driving the fuzz campaigns.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from .model import Configuration, Mode


class ScenarioError(Exception):
    pass


_DIRECTIVE_OPS = {"broadcast", "execute", "crash", "reconfigure"}


@dataclass
class Scenario:
    name: str
    mode: Mode
    processes: list[int]
    initial: Configuration
    schedule: list[dict]
    d_min: int = 1
    d_max: int = 1
    seed: int = 0
    step_cap: int = 100_000
    cs_latency: int = 0
    app: Optional[str] = None

    def crash_targets(self) -> set[int]:
        return {d["proc"] for d in self.schedule if d["op"] == "crash"}

    def reconfig_directives(self) -> list[dict]:
        return [d for d in self.schedule if d["op"] == "reconfigure"]

    def validate(self) -> None:
        procs = set(self.processes)
        if len(self.processes) != len(procs):
            raise ScenarioError("duplicate process ids")
        if self.initial.epoch != 0:
            raise ScenarioError("initial configuration must have epoch 0")
        if not self.initial.members <= procs:
            raise ScenarioError("initial members must be declared processes")
        if not (1 <= self.d_min <= self.d_max):
            raise ScenarioError("delay range must satisfy 1 <= min <= max")
        if self.step_cap <= 0:
            raise ScenarioError("step_cap must be positive")
        if self.app is not None and self.app not in ("counter", "random_assign"):
            raise ScenarioError(f"unknown state machine {self.app!r}")
        for d in self.schedule:
            op = d.get("op")
            if op not in _DIRECTIVE_OPS:
                raise ScenarioError(f"unknown directive {op!r}")
            if op == "crash":
                if d["proc"] not in procs:
                    raise ScenarioError("crash target not declared")
                if ("at" in d) == ("on_receive" in d):
                    raise ScenarioError("crash needs exactly one of 'at'/'on_receive'")
            else:
                if "at" not in d or not isinstance(d["at"], int) or d["at"] < 0:
                    raise ScenarioError(f"directive {op} needs a non-negative 'at'")
            if op == "broadcast":
                if d["proc"] != "leader" and d["proc"] not in procs:
                    raise ScenarioError("broadcast proc not declared")
                if not isinstance(d.get("payload"), str):
                    raise ScenarioError("broadcast needs a string payload")
            if op == "execute":
                if self.app is None:
                    raise ScenarioError("execute directive requires an app machine")
                if d["client"] not in procs:
                    raise ScenarioError("execute client not declared")
            if op == "reconfigure":
                if d["by"] not in procs:
                    raise ScenarioError("reconfigure initiator not declared")
                desired = set(d["desired_members"])
                if not desired or not desired <= procs:
                    raise ScenarioError("desired members must be declared and non-empty")
                if d.get("desired_leader") is not None and d["desired_leader"] not in procs:
                    raise ScenarioError("desired leader not declared")
        self._validate_fault_plan()

    def _validate_fault_plan(self) -> None:
        targets = self.crash_targets()
        survivors = set(self.processes) - targets
        if not self.initial.members & survivors:
            raise ScenarioError(
                "fault plan inadmissible: every initial member eventually crashes"
            )
        for d in self.reconfig_directives():
            if not set(d["desired_members"]) & survivors:
                raise ScenarioError(
                    "fault plan inadmissible: a desired member set has no survivor"
                )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mode": self.mode.value,
            "processes": list(self.processes),
            "initial_config": {
                "epoch": self.initial.epoch,
                "members": self.initial.sorted_members(),
                "leader": self.initial.leader,
            },
            "schedule": [
                {k: v for k, v in d.items() if not k.startswith("_")}
                for d in self.schedule
            ],
            "delays": {"min": self.d_min, "max": self.d_max},
            "seed": self.seed,
            "step_cap": self.step_cap,
            "cs_latency": self.cs_latency,
            "app": self.app,
        }

    @classmethod
    def from_dict(cls, obj: dict, name: str = "scenario") -> "Scenario":
        try:
            init = obj["initial_config"]
            scenario = cls(
                name=obj.get("name", name),
                mode=Mode(obj["mode"]),
                processes=list(obj["processes"]),
                initial=Configuration(
                    init["epoch"], frozenset(init["members"]), init["leader"]
                ),
                schedule=[dict(d) for d in obj.get("schedule", [])],
                d_min=obj.get("delays", {}).get("min", 1),
                d_max=obj.get("delays", {}).get("max", 1),
                seed=obj.get("seed", 0),
                step_cap=obj.get("step_cap", 100_000),
                cs_latency=obj.get("cs_latency", 0),
                app=obj.get("app"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        scenario.validate()
        return scenario


@dataclass
class LivenessPremise:
    """Static flags under which the liveness guarantees are checkable.

    Derived from the scenario and its fault plan only.  The premise holds when
    the last reconfiguration request is issued by a never-crashing process, no
    other reconfiguration can still be taking steps (worst-case duration
    margin), and the resulting configuration can only contain never-crashing
    processes (fixed delays, all crashes strictly before the request, no
    crash triggers, desired members crash-free).
    """

    requester: int
    requested_at: int
    requester_correct: bool
    isolation: bool
    members_correct: bool

    @property
    def holds(self) -> bool:
        return self.requester_correct and self.isolation and self.members_correct


def reconfig_duration_bound(ordinal: int, d_max: int) -> int:
    # fetch + up to (ordinal+1) probe rounds of one RTT each + cas + slack
    return (2 * (ordinal + 2) + 2) * d_max


def compute_premise(scenario: Scenario) -> Optional[LivenessPremise]:
    reconfigs = sorted(scenario.reconfig_directives(), key=lambda d: d["at"])
    if not reconfigs:
        return None
    last = reconfigs[-1]
    crash_times = [d["at"] for d in scenario.schedule if d["op"] == "crash" and "at" in d]
    has_triggers = any(
        d["op"] == "crash" and "on_receive" in d for d in scenario.schedule
    )
    targets = scenario.crash_targets()
    requester_correct = last["by"] not in targets
    isolation = all(
        d["at"] + reconfig_duration_bound(i, scenario.d_max) <= last["at"]
        for i, d in enumerate(reconfigs[:-1])
    )
    members_correct = (
        scenario.d_min == scenario.d_max
        and not has_triggers
        and not (set(last["desired_members"]) & targets)
        and all(t < last["at"] for t in crash_times)
    )
    return LivenessPremise(
        requester=last["by"],
        requested_at=last["at"],
        requester_correct=requester_correct,
        isolation=isolation,
        members_correct=members_correct,
    )


# -- bundled scenarios ------------------------------------------------------------


def _steady_state() -> Scenario:
    return Scenario(
        name="steady_state",
        mode=Mode.VAB,
        processes=[1, 2, 3],
        initial=Configuration(0, frozenset({1, 2, 3}), 3),
        schedule=[
            {"op": "broadcast", "proc": 1, "payload": "a", "at": 5},
            {"op": "broadcast", "proc": 3, "payload": "b", "at": 9},
            {"op": "broadcast", "proc": 2, "payload": "c", "at": 13},
        ],
    )


def _singleton() -> Scenario:
    return Scenario(
        name="singleton",
        mode=Mode.VAB,
        processes=[1],
        initial=Configuration(0, frozenset({1}), 1),
        schedule=[{"op": "broadcast", "proc": 1, "payload": "solo", "at": 3}],
    )


def _zero_downtime(mode: Mode) -> Scenario:
    # reconfigure a healthy configuration while it keeps committing: the
    # broadcast at t=11 lands between the first probe (t=10) and the new
    # leader's epoch switch (t=13)
    return Scenario(
        name=f"zero_downtime_{mode.value}",
        mode=mode,
        processes=[1, 2, 3, 4],
        initial=Configuration(0, frozenset({1, 2, 3}), 3),
        schedule=[
            {"op": "broadcast", "proc": "leader", "payload": "warmup", "at": 2},
            {"op": "reconfigure", "by": 4, "desired_members": [1, 2, 4],
             "desired_leader": 2, "at": 10},
            {"op": "broadcast", "proc": "leader", "payload": "inflight", "at": 11},
            {"op": "broadcast", "proc": "leader", "payload": "fresh-epoch", "at": 30},
        ],
    )


def _fig4_reconfig(mode: Mode = Mode.SPO) -> Scenario:
    # bootstrap at epoch 0, immediately reconfigure to an identical-membership
    # epoch 1, then walk the two-crash reconfiguration chain 1 -> 2 -> 3
    return Scenario(
        name="fig4_reconfig",
        mode=mode,
        processes=[1, 2, 3, 4, 5, 6],
        initial=Configuration(0, frozenset({1, 2, 3}), 3),
        schedule=[
            {"op": "reconfigure", "by": 6, "desired_members": [1, 2, 3],
             "desired_leader": 3, "at": 1},
            {"op": "broadcast", "proc": "leader", "payload": "m0", "at": 8},
            {"op": "broadcast", "proc": "leader", "payload": "m1", "at": 9},
            {"op": "crash", "proc": 3, "at": 14},
            {"op": "reconfigure", "by": 6, "desired_members": [1, 2, 4],
             "desired_leader": 2, "at": 15},
            {"op": "crash", "proc": 2, "on_receive": {"type": "NEW_CONFIG", "epoch": 2}},
            {"op": "reconfigure", "by": 6, "desired_members": [1, 4, 5],
             "desired_leader": 1, "at": 25},
        ],
    )


def _counter_demo() -> Scenario:
    return Scenario(
        name="counter_demo",
        mode=Mode.SPO,
        processes=[1, 2, 3, 4],
        initial=Configuration(0, frozenset({1, 2, 3}), 1),
        app="counter",
        schedule=[
            {"op": "execute", "client": 2, "command": {"kind": "inc"}, "at": 2},
            {"op": "execute", "client": 3, "command": {"kind": "inc"}, "at": 8},
            {"op": "reconfigure", "by": 4, "desired_members": [1, 2, 4],
             "desired_leader": 2, "at": 14},
            {"op": "execute", "client": 2, "command": {"kind": "read"}, "at": 30},
        ],
    )


def _anomaly_vab() -> Scenario:
    # deliberately mis-wired replication: plain (non-primary-order) broadcast
    # under a leader change loses the first increment from the new leader's
    # speculative state, reproducing the stale-read anomaly
    return Scenario(
        name="anomaly_vab",
        mode=Mode.VAB,
        processes=[1, 2, 3],
        initial=Configuration(0, frozenset({1, 2}), 1),
        app="counter",
        schedule=[
            {"op": "execute", "client": 3, "command": {"kind": "inc"}, "at": 1},
            {"op": "crash", "proc": 1, "at": 4},
            {"op": "reconfigure", "by": 3, "desired_members": [2],
             "desired_leader": 2, "at": 5},
            {"op": "execute", "client": 2, "command": {"kind": "inc"}, "at": 12},
            {"op": "execute", "client": 2, "command": {"kind": "read"}, "at": 16},
        ],
    )


def bundled(name: str) -> Scenario:
    builders = {
        "steady_state": _steady_state,
        "singleton": _singleton,
        "zero_downtime": lambda: _zero_downtime(Mode.VAB),
        "zero_downtime_spo": lambda: _zero_downtime(Mode.SPO),
        "zero_downtime_po": lambda: _zero_downtime(Mode.PO),
        "fig4_reconfig": _fig4_reconfig,
        "counter_demo": _counter_demo,
        "anomaly_vab": _anomaly_vab,
    }
    if name not in builders:
        raise ScenarioError(f"unknown bundled scenario {name!r}")
    scenario = builders[name]()
    scenario.validate()
    return scenario


BUNDLED_NAMES = (
    "steady_state",
    "singleton",
    "zero_downtime",
    "zero_downtime_spo",
    "zero_downtime_po",
    "fig4_reconfig",
    "counter_demo",
    "anomaly_vab",
)


# -- fuzz generation -----------------------------------------------------------------


def random_scenario(
    seed: int,
    mode: Mode,
    max_procs: int = 7,
    max_reconfigs: int = 5,
    premise: bool = False,
    app: Optional[str] = None,
    max_client_ops: int = 12,
) -> Scenario:
    """Random admissible scenario: serial reconfigurations with membership
    churn, client load, and crashes that keep every potential configuration
    survivable.  With ``premise=True`` the final reconfiguration satisfies the
    liveness premise."""
    rng = random.Random(seed * 1_000_003 + 17)
    n = rng.randint(3, max_procs)
    procs = list(range(1, n + 1))
    k = rng.randint(1, min(4, n))
    members = rng.sample(procs, k)
    leader = rng.choice(members)
    initial = Configuration(0, frozenset(members), leader)

    schedule: list[dict] = []
    n_reconfigs = rng.randint(1, max_reconfigs) if max_reconfigs else 0
    if premise:
        n_reconfigs = max(1, n_reconfigs)
        if app is None:
            # one committed message before any reconfiguration keeps every
            # epoch's inherited log non-empty, so deferred-activation modes
            # always have a replay to announce the new configuration with
            schedule.append({
                "op": "broadcast",
                "proc": "leader" if mode is not Mode.VAB else leader,
                "payload": "seed0", "at": 1,
            })
    spacing = reconfig_duration_bound(n_reconfigs + 1, 1) + rng.randint(2, 6)
    reconfig_times = []
    t = rng.randint(6, 12) if premise else rng.randint(3, 10)
    member_sets = [set(members)]
    crashable_pool: list[tuple[int, int]] = []  # (proc, crash-before time)
    for i in range(n_reconfigs):
        desired_k = rng.randint(1, min(4, n))
        desired = set(rng.sample(procs, desired_k))
        # keep the pool of processes that may crash without hurting anyone
        member_sets.append(desired)
        dl_pool = sorted(member_sets[i] | desired)
        desired_leader = rng.choice(dl_pool) if rng.random() < 0.7 else None
        schedule.append(
            {"op": "reconfigure", "by": rng.choice(procs),
             "desired_members": sorted(desired), "desired_leader": desired_leader,
             "at": t}
        )
        reconfig_times.append(t)
        t += spacing
    horizon = t + spacing

    # broadcasts sprinkled through the run; in primary-order modes they are
    # resolved to whichever leader is ready when the directive fires.  In
    # replication runs all traffic goes through execute directives instead,
    # since every delivered payload is interpreted as a state update.
    if app is None:
        n_bcast = rng.randint(2, 8)
        for b in range(n_bcast):
            at = rng.randint(1, horizon)
            proc = "leader" if mode is not Mode.VAB else rng.choice(sorted(member_sets[0]))
            schedule.append({"op": "broadcast", "proc": proc, "payload": f"b{b}", "at": at})

    if app is not None:
        n_ops = rng.randint(2, max_client_ops)
        clients = rng.sample(procs, min(len(procs), rng.randint(1, 3)))
        kinds = ["inc", "read"] if app == "counter" else ["assign", "read"]
        for _ in range(n_ops):
            schedule.append(
                {"op": "execute", "client": rng.choice(clients),
                 "command": {"kind": rng.choice(kinds)},
                 "at": rng.randint(1, horizon)}
            )

    # crash plan: keep one never-crashing process per potential configuration
    protected: set[int] = set()
    for s in member_sets:
        if not s & protected:
            protected.add(rng.choice(sorted(s)))
    last_at = reconfig_times[-1] if reconfig_times else horizon
    if premise:
        final_desired = set(schedule_final_desired(schedule))
        protected |= final_desired
        protected.add([d for d in schedule if d["op"] == "reconfigure"][-1]["by"])
    candidates = [p for p in procs if p not in protected]
    rng.shuffle(candidates)
    clients_used = {
        d["client"] for d in schedule if d["op"] == "execute"
    }
    for p in candidates[: rng.randint(0, max(0, len(candidates) // 2))]:
        if p in clients_used:
            continue
        at = rng.randint(1, last_at - 1 if premise and last_at > 1 else horizon)
        schedule.append({"op": "crash", "proc": p, "at": at})

    schedule.sort(key=lambda d: d.get("at", 0))
    scenario = Scenario(
        name=f"fuzz-{mode.value}-{seed}",
        mode=mode,
        processes=procs,
        initial=initial,
        schedule=schedule,
        d_min=1,
        d_max=1 if premise else rng.choice([1, 1, 2]),
        seed=seed,
        app=app,
    )
    scenario.validate()
    return scenario


def schedule_final_desired(schedule: list[dict]) -> list[int]:
    reconfigs = [d for d in schedule if d["op"] == "reconfigure"]
    return reconfigs[-1]["desired_members"] if reconfigs else []


def chaos_scenario(seed: int, mode: Mode, max_procs: int = 7,
                   app: Optional[str] = None) -> Scenario:
    """Adversarial safety stress: overlapping reconfigurations from several
    initiators, crashes inside reconfiguration windows, leaders lost on
    NEW_CONFIG receipt, and wider delay jitter.  Liveness is not expected to
    be evaluable here; safety and the state monitors must hold regardless."""
    rng = random.Random(seed * 9_176_087 + 3)
    n = rng.randint(4, max_procs)
    procs = list(range(1, n + 1))
    members = sorted(rng.sample(procs, rng.randint(2, 3)))
    leader = rng.choice(members)
    initial = Configuration(0, frozenset(members), leader)
    horizon = rng.randint(30, 80)

    schedule: list[dict] = []
    member_sets = [set(members)]
    n_reconfigs = rng.randint(2, 5)
    initiators = rng.sample(procs, min(len(procs), n_reconfigs))
    for i in range(n_reconfigs):
        desired = set(rng.sample(procs, rng.randint(1, 4)))
        member_sets.append(desired)
        schedule.append({
            "op": "reconfigure",
            "by": initiators[i % len(initiators)],
            "desired_members": sorted(desired),
            "desired_leader": rng.choice(sorted(desired)) if rng.random() < 0.5 else None,
            "at": rng.randint(1, horizon),
        })
    if app is None:
        for b in range(rng.randint(2, 6)):
            proc = "leader" if mode is not Mode.VAB else rng.choice(sorted(member_sets[0]))
            schedule.append({
                "op": "broadcast", "proc": proc, "payload": f"c{b}",
                "at": rng.randint(1, horizon + 20),
            })

    protected: set[int] = set()
    for s in member_sets:
        if not s & protected:
            protected.add(rng.choice(sorted(s)))
    candidates = [p for p in procs if p not in protected]
    rng.shuffle(candidates)
    crash_targets = candidates[: rng.randint(0, len(candidates))]
    for p in crash_targets:
        if rng.random() < 0.3:
            schedule.append({
                "op": "crash", "proc": p,
                "on_receive": {"type": "NEW_CONFIG",
                               "epoch": rng.randint(1, n_reconfigs)},
            })
        else:
            schedule.append({"op": "crash", "proc": p, "at": rng.randint(1, horizon)})

    if app is not None:
        kinds = ["inc", "read"] if app == "counter" else ["assign", "read"]
        clients = [p for p in procs if p not in crash_targets]
        for _ in range(rng.randint(2, 12)):
            schedule.append({
                "op": "execute", "client": rng.choice(clients),
                "command": {"kind": rng.choice(kinds)},
                "at": rng.randint(1, horizon + 20),
            })

    schedule.sort(key=lambda d: d.get("at", 0))
    scenario = Scenario(
        name=f"chaos-{mode.value}-{seed}",
        mode=mode,
        processes=procs,
        initial=initial,
        schedule=schedule,
        d_min=1,
        d_max=rng.choice([1, 2, 3]),
        seed=seed,
        app=app,
    )
    scenario.validate()
    return scenario


def mutant_scenario(seed: int, mode: Mode) -> Scenario:
    """Scenario family for checker-sensitivity campaigns: early committed
    traffic, a leader lost on NEW_CONFIG receipt (so probing must skip a dead
    epoch), a premise-satisfying final reconfiguration, and late traffic."""
    rng = random.Random(seed * 7_368_787 + 5)
    n = rng.randint(4, 7)
    procs = list(range(1, n + 1))
    members = sorted(rng.sample(procs, 3))
    leader = rng.choice(members)
    initial = Configuration(0, frozenset(members), leader)
    fresh = [p for p in procs if p not in members]
    mid_members = sorted(rng.sample(procs, rng.randint(2, 3)))
    mid_leader = rng.choice(sorted(set(members) & set(mid_members))) if set(members) & set(mid_members) else None
    final_members = sorted(set(rng.sample(procs, rng.randint(2, 3))) | {fresh[0]})
    schedule = [
        {"op": "broadcast", "proc": "leader" if mode is not Mode.VAB else members[0],
         "payload": "early0", "at": 2},
        {"op": "broadcast", "proc": "leader" if mode is not Mode.VAB else members[1 % len(members)],
         "payload": "early1", "at": 4},
        {"op": "reconfigure", "by": procs[-1], "desired_members": mid_members,
         "desired_leader": mid_leader, "at": 12},
        {"op": "crash", "proc": mid_leader if mid_leader is not None else mid_members[0],
         "on_receive": {"type": "NEW_CONFIG", "epoch": 1}},
        {"op": "reconfigure", "by": procs[-1], "desired_members": final_members,
         "desired_leader": None, "at": 40},
        {"op": "broadcast", "proc": "leader" if mode is not Mode.VAB else members[0],
         "payload": "late0", "at": 70},
    ]
    scenario = Scenario(
        name=f"mutant-{mode.value}-{seed}",
        mode=mode,
        processes=procs,
        initial=initial,
        schedule=schedule,
        seed=seed,
    )
    scenario.validate()
    return scenario
