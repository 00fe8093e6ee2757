"""Deterministic discrete-event simulator.

Single-threaded event loop over (time, seq) ordered events.  Channels are
reliable FIFO with seeded integer delays; self-addressed messages are received
instantaneously (delay 0, later seq at the same tick).  Configuration-service
calls run as atomic scheduler steps with configurable latency (default 0).
Crashes stop a process permanently: it executes no further handlers and
messages addressed to it are dropped at delivery time.

Identical scenario + seed reproduces the run byte for byte.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Optional

from .config_service import ConfigStore
from .model import (
    Accept,
    AppMessage,
    BROADCAST,
    Commit,
    CONF_CHANGED,
    Configuration,
    DELIVER,
    HistEvent,
    INTRODUCTION,
    MessageFactory,
    Mode,
    NewConfig,
    NewState,
    Probe,
    ProbeAck,
    RECONFIG_REQ,
    RECONFIG_RESP,
    Status,
)
from .monitors import Monitors, Violation
from .node import Node
from .replication import MACHINES, ClientOp, Replica
from .scenario import Scenario

_TRIGGER_TYPES = {
    "NEW_CONFIG": NewConfig,
    "NEW_STATE": NewState,
    "ACCEPT": Accept,
    "COMMIT": Commit,
    "PROBE": Probe,
}

_FETCH = "fetch_epoch"
_PROBING = "probing"
_AWAIT_CAS = "await_cas"
_DONE = "done"


class ReconfigTask:
    """Resumable reconfiguration: fetch the last epoch, probe configurations
    downward for a process initialized at the highest activated epoch, then
    compare-and-swap the new configuration in."""

    def __init__(self, sim: "Simulator", proc: int, desired: frozenset[int],
                 desired_leader: Optional[int]):
        self.sim = sim
        self.proc = proc
        self.desired = desired
        self.desired_leader = desired_leader
        self.phase = _FETCH
        self.e_new: Optional[int] = None
        self.probe_epoch: Optional[int] = None
        self.round_members: frozenset[int] = frozenset()
        self.acks: list[tuple[int, bool]] = []
        # FIFO channels make the i-th ack from a process answer the i-th
        # probe sent to it, which pins each ack to its probing round
        self._probes_to: dict[int, list[int]] = {}
        self._acks_from: dict[int, int] = {}

    def start(self) -> None:
        self.sim.emit_reconfig_req(self.proc)
        self.sim.cs_call(self.proc, "get_last_epoch", (), self)

    def on_cs(self, op: str, result) -> None:
        if self.phase == _FETCH and op == "get_last_epoch":
            self.e_new = result + 1
            if self.sim.mutation == "skip-probing":
                leader = self.desired_leader
                if leader is None:
                    leader = min(self.desired)
                self._attempt_cas(leader)
                return
            self.phase = _PROBING
            self._start_round(result)
        elif self.phase == _PROBING and op == "get_members":
            self.round_members = result
            self.sim.note_probe_round(self.e_new, self.proc)
            for q in self._probe_order(result):
                self._probes_to.setdefault(q, []).append(self.probe_epoch)
                self.sim.send(self.proc, q, Probe(self.e_new, self.probe_epoch))
        elif self.phase == _AWAIT_CAS and op == "cas":
            ok, config = result
            if ok:
                self.sim.send(self.proc, config.leader,
                              NewConfig(config.epoch, config.members))
                self.sim.emit_reconfig_resp(self.proc, config)
            else:
                self.sim.emit_reconfig_resp(self.proc, None)
            self._finish()

    def _probe_order(self, members: frozenset[int]) -> list[int]:
        # preferring the desired leader first makes its ack arrive first under
        # uniform delays, which realizes the leader-selection policy
        order = sorted(members)
        if self.desired_leader in members:
            order.remove(self.desired_leader)
            order.insert(0, self.desired_leader)
        return order

    def _start_round(self, epoch: int) -> None:
        # acks from earlier rounds arriving before the membership fetch
        # completes are recorded but cannot advance the round
        self.probe_epoch = epoch
        self.round_members = frozenset()
        self.sim.cs_call(self.proc, "get_members", (epoch,), self)

    def on_probe_ack(self, src: int, ack: ProbeAck) -> None:
        if self.phase != _PROBING or ack.new_epoch != self.e_new:
            return
        self.acks.append((src, ack.flag))
        i = self._acks_from.get(src, 0)
        self._acks_from[src] = i + 1
        sent = self._probes_to.get(src, ())
        ack_round = sent[i] if i < len(sent) else None
        if ack_round != self.probe_epoch:
            # reply to an earlier round's probe: recorded (a true ack still
            # ends probing at the next decision point) but it is not the
            # current round's awaited answer
            return
        if self.sim.mutation == "leader-any":
            self._attempt_cas(self.acks[0][0])
            return
        trues = [s for s, f in self.acks if f]
        if trues:
            self._attempt_cas(trues[0])
            return
        if self.probe_epoch == 0:
            self.sim.monitors.violations.append(Violation(
                "ProbeUnderflow",
                f"reconfiguration by p{self.proc} probed below epoch 0",
                {"proc": self.proc, "new_epoch": self.e_new},
            ))
            self.sim.emit_reconfig_resp(self.proc, None)
            self._finish()
            return
        self._start_round(self.probe_epoch - 1)

    def _attempt_cas(self, leader: int) -> None:
        members = self.desired | {leader}
        config = Configuration(self.e_new, members, leader)
        self.phase = _AWAIT_CAS
        self.sim.cs_call(self.proc, "cas", (self.e_new - 1, config), self)

    def _finish(self) -> None:
        self.phase = _DONE
        self.sim.task_finished(self.proc)


@dataclass
class RunResult:
    scenario: Scenario
    history: list[HistEvent]
    metrics: dict
    violations: list[Violation]
    quiescent: bool
    steps: int
    clock: int
    warnings: list[str]
    wire_log: list[tuple]
    ops: list[ClientOp]
    committed_states: dict[int, object] = field(default_factory=dict)


class Simulator:
    def __init__(self, scenario: Scenario, mutation: Optional[str] = None):
        self.scenario = scenario
        self.mode: Mode = scenario.mode
        self.mutation = mutation
        self.rng = random.Random(scenario.seed)
        self.app_rng = random.Random((scenario.seed * 2654435761 + 1) % (1 << 62))
        self.now = 0
        self._seq = 0
        self._events: list[tuple] = []
        self.monitors = Monitors()
        self.history: list[HistEvent] = []
        self.warnings: list[str] = []
        self.wire_log: list[tuple] = []
        self.crashed: set[int] = set()
        self._floors: dict[tuple[int, int], int] = {}
        self._chan_sent: dict[tuple[int, int], int] = {}
        self._chan_delivered: dict[tuple[int, int], int] = {}
        self._factory = MessageFactory()
        self._tasks: dict[int, ReconfigTask] = {}
        self.ops: list[ClientOp] = []
        self._ops_by_id: dict[tuple, ClientOp] = {}

        self.store = ConfigStore(on_introduction=self._on_introduction)
        self.store.seed_initial(scenario.initial)

        self.nodes: dict[int, Node] = {}
        for p in scenario.processes:
            node = Node(p, self)
            self.nodes[p] = node
            self.monitors.attach_node(node)

        self.replicas: dict[int, Replica] = {}
        if scenario.app is not None:
            machine = MACHINES[scenario.app]
            for p in scenario.processes:
                self.replicas[p] = Replica(p, machine, self, scenario.initial.leader)

        # metric records
        self._m_broadcast_at: dict[tuple, tuple[int, int]] = {}  # ident -> (t, proc)
        self._m_leader_recv: dict[tuple, tuple[int, int, int]] = {}  # ident -> (t, leader, epoch)
        self._m_deliver_at: dict[tuple[int, tuple], int] = {}  # (proc, ident) -> t
        self._m_conf_changed: list[tuple[int, int, int]] = []  # (epoch, proc, t)
        self._m_epoch_set: dict[int, tuple[int, int, int]] = {}  # epoch -> (t, leader, prior)
        self._m_ready: dict[int, int] = {}  # epoch -> leader conf_changed t
        self._m_introduced: dict[int, int] = {}  # epoch -> t
        self._m_first_probe: dict[int, int] = {}  # new epoch -> t of first probe round
        self._m_crash_at: dict[int, int] = {}
        self._m_commit_sends: list[tuple[int, int, tuple, int]] = []  # (epoch,pos,ident,t)
        self._m_configs: dict[int, Configuration] = {scenario.initial.epoch: scenario.initial}

        self._triggers = [dict(d) for d in scenario.schedule if "on_receive" in d]
        self._bootstrap()
        for i, d in enumerate(scenario.schedule):
            if "on_receive" in d:
                continue
            self._push(d["at"], ("dir", d))

    # -- event machinery ---------------------------------------------------------

    def _push(self, t: int, payload) -> None:
        import heapq

        heapq.heappush(self._events, (t, self._seq, payload))
        self._seq += 1

    def _bootstrap(self) -> None:
        initial = self.scenario.initial
        self._emit(initial.leader, INTRODUCTION, config=initial)
        self._m_introduced[initial.epoch] = 0
        self.monitors.note_membership(initial)
        for p in initial.sorted_members():
            self.nodes[p].bootstrap(initial)
            self.monitors.note_epoch_holder(p, initial.epoch)
            spec = () if (self.mode is Mode.SPO and p == initial.leader) else None
            self.emit_conf_changed(p, initial, spec)

    def run(self) -> RunResult:
        import heapq

        steps = 0
        cap = self.scenario.step_cap
        while self._events and steps < cap:
            t, _seq, payload = heapq.heappop(self._events)
            self.now = t
            steps += 1
            kind = payload[0]
            if kind == "msg":
                self._dispatch_message(payload)
            elif kind == "dir":
                self._run_directive(payload[1])
            elif kind == "cs":
                self._dispatch_cs(payload)
        quiescent = not self._events
        self.monitors.finalize()
        metrics = self._finalize_metrics(quiescent, steps)
        committed = {p: r.committed for p, r in sorted(self.replicas.items())}
        return RunResult(
            scenario=self.scenario,
            history=self.history,
            metrics=metrics,
            violations=self.monitors.violations,
            quiescent=quiescent,
            steps=steps,
            clock=self.now,
            warnings=self.warnings,
            wire_log=self.wire_log,
            ops=self.ops,
            committed_states=committed,
        )

    def _dispatch_message(self, payload) -> None:
        _, src, dst, wire, chan_seq = payload
        expected = self._chan_delivered.get((src, dst), 0) + 1
        assert chan_seq == expected, f"FIFO violated on channel {src}->{dst}"
        self._chan_delivered[(src, dst)] = chan_seq
        if dst in self.crashed:
            return
        for trig in self._triggers:
            if trig.get("_fired"):
                continue
            if trig["proc"] != dst:
                continue
            cond = trig["on_receive"]
            cls = _TRIGGER_TYPES.get(cond["type"])
            if cls is None or not isinstance(wire, cls):
                continue
            want_epoch = cond.get("epoch")
            have_epoch = getattr(wire, "epoch", getattr(wire, "new_epoch", None))
            if want_epoch is not None and have_epoch != want_epoch:
                continue
            trig["_fired"] = True
            self._crash(dst)
            return  # the triggering message dies with the process
        if isinstance(wire, ProbeAck):
            task = self._tasks.get(dst)
            if task is not None:
                task.on_probe_ack(src, wire)
            return
        self.nodes[dst].receive(wire, src)

    def _dispatch_cs(self, payload) -> None:
        _, proc, op, args, task = payload
        if proc in self.crashed:
            return
        if op == "get_last_epoch":
            result = self.store.get_last_epoch()
        elif op == "get_members":
            result = self.store.get_members(*args)
        elif op == "cas":
            expected, config = args
            ok = self.store.compare_and_swap(expected, config, by=proc)
            result = (ok, config)
        else:  # pragma: no cover
            raise AssertionError(op)
        task.on_cs(op, result)

    def _run_directive(self, d: dict) -> None:
        op = d["op"]
        if op == "crash":
            self._crash(d["proc"])
        elif op == "broadcast":
            self._directive_broadcast(d)
        elif op == "execute":
            client = d["client"]
            if client in self.crashed:
                self.warn(f"execute directive at crashed p{client} skipped")
                return
            self.replicas[client].client_execute(d["command"])
        elif op == "reconfigure":
            by = d["by"]
            if by in self.crashed:
                self.warn(f"reconfigure directive at crashed p{by} skipped")
                return
            if by in self._tasks:
                self.warn(f"p{by} already reconfiguring; directive skipped")
                return
            task = ReconfigTask(
                self, by, frozenset(d["desired_members"]), d.get("desired_leader")
            )
            self._tasks[by] = task
            task.start()

    def _directive_broadcast(self, d: dict) -> None:
        proc = d["proc"]
        if proc == "leader":
            candidates = [
                n for n in self.nodes.values()
                if n.pid not in self.crashed and n.status is Status.LEADER and n.ready
            ]
            if not candidates:
                self.warn("broadcast directive skipped: no ready leader")
                return
            node = max(candidates, key=lambda n: (n.epoch, n.pid))
        else:
            if proc in self.crashed:
                self.warn(f"broadcast directive at crashed p{proc} skipped")
                return
            node = self.nodes[proc]
        m = self._factory.fresh(node.pid, d["payload"])
        if self.mode is Mode.VAB:
            node.broadcast_request(m)
        else:
            node.leader_broadcast(m)

    def _crash(self, proc: int) -> None:
        if proc in self.crashed:
            return
        self.crashed.add(proc)
        self._m_crash_at[proc] = self.now
        self._tasks.pop(proc, None)

    # -- ctx surface used by nodes, tasks and replicas -----------------------------

    def warn(self, message: str) -> None:
        self.warnings.append(f"t={self.now}: {message}")

    def send(self, src: int, dst: int, wire) -> None:
        self.wire_log.append((self.now, src, dst, wire))
        key = (src, dst)
        delay = 0 if src == dst else self.rng.randint(self.scenario.d_min, self.scenario.d_max)
        t = max(self._floors.get(key, 0), self.now + delay)
        self._floors[key] = t
        chan_seq = self._chan_sent.get(key, 0) + 1
        self._chan_sent[key] = chan_seq
        self._push(t, ("msg", src, dst, wire, chan_seq))

    def cs_call(self, proc: int, op: str, args: tuple, task: ReconfigTask) -> None:
        self._push(self.now + self.scenario.cs_latency, ("cs", proc, op, args, task))

    def task_finished(self, proc: int) -> None:
        self._tasks.pop(proc, None)

    def note_probe_round(self, e_new: int, proc: int) -> None:
        self._m_first_probe.setdefault(e_new, self.now)

    def note_epoch_set(self, pid: int, epoch: int, prior: int) -> None:
        if epoch not in self._m_epoch_set:
            self._m_epoch_set[epoch] = (self.now, pid, prior)

    def note_commit_send(self, pid: int, epoch: int, pos: int, m) -> None:
        self._m_commit_sends.append((epoch, pos, m.ident, self.now))

    def note_leader_append(self, pid: int, m, epoch: int) -> None:
        self._m_leader_recv[m.ident] = (self.now, pid, epoch)

    def _emit(self, proc: int, kind: str, msg=None, config=None, spec=None) -> HistEvent:
        ev = HistEvent(len(self.history) + 1, proc, self.now, kind,
                       msg=msg, config=config, spec=spec)
        self.history.append(ev)
        return ev

    def emit_broadcast(self, pid: int, m: AppMessage) -> None:
        self._emit(pid, BROADCAST, msg=m)
        self._m_broadcast_at[m.ident] = (self.now, pid)

    def emit_deliver(self, pid: int, m: AppMessage) -> None:
        self._emit(pid, DELIVER, msg=m)
        self._m_deliver_at.setdefault((pid, m.ident), self.now)
        if pid in self.replicas:
            self.replicas[pid].on_deliver(m)

    def emit_conf_changed(self, pid: int, config: Configuration, spec) -> None:
        self._emit(pid, CONF_CHANGED, config=config, spec=spec)
        self._m_conf_changed.append((config.epoch, pid, self.now))
        if pid == config.leader:
            self._m_ready.setdefault(config.epoch, self.now)
        if pid in self.replicas:
            self.replicas[pid].on_conf_changed(config, spec)

    def emit_reconfig_req(self, pid: int) -> None:
        self._emit(pid, RECONFIG_REQ)

    def emit_reconfig_resp(self, pid: int, config) -> None:
        self._emit(pid, RECONFIG_RESP, config=config)

    def _on_introduction(self, by: int, config: Configuration) -> None:
        self._emit(by, INTRODUCTION, config=config)
        self._m_introduced[config.epoch] = self.now
        self._m_configs[config.epoch] = config
        self.monitors.note_membership(config)

    # replication hooks

    def record_op(self, op: ClientOp) -> None:
        self.ops.append(op)
        self._ops_by_id[op.cmd_id] = op

    def complete_op(self, cmd_id, value) -> None:
        op = self._ops_by_id.get(cmd_id)
        if op is not None and not op.completed:
            op.result = value
            op.completed_at = self.now

    def app_execute_enabled(self, pid: int) -> bool:
        replica = self.replicas.get(pid)
        return replica is not None and replica.execute_enabled()

    def app_on_execute(self, pid: int, cmd_id, command) -> None:
        self.replicas[pid].on_execute(cmd_id, command)

    def app_on_result(self, pid: int, cmd_id, value) -> None:
        self.replicas[pid].on_result(cmd_id, value)

    def app_broadcast(self, pid: int, payload: str) -> Optional[AppMessage]:
        m = self._factory.fresh(pid, payload)
        node = self.nodes[pid]
        ok = (
            node.broadcast_request(m)
            if self.mode is Mode.VAB
            else node.leader_broadcast(m)
        )
        return m if ok else None

    # -- metrics -------------------------------------------------------------------

    def _activation_times(self) -> dict[int, int]:
        seen: dict[tuple[int, int], int] = {}
        for epoch, proc, t in self._m_conf_changed:
            seen.setdefault((epoch, proc), t)
        out = {}
        for epoch, config in self._m_configs.items():
            times = [seen.get((epoch, p)) for p in config.sorted_members()]
            if all(t is not None for t in times):
                out[epoch] = max(times)
        return out

    def _finalize_metrics(self, quiescent: bool, steps: int) -> dict:
        activation = self._activation_times()
        samples = []
        stable_samples = []
        for ident, (t_recv, leader, epoch) in sorted(self._m_leader_recv.items()):
            t_del = self._m_deliver_at.get((leader, ident))
            if t_del is None:
                continue
            sample = t_del - t_recv
            samples.append(sample)
            config = self._m_configs.get(epoch)
            if config is None or epoch not in activation or activation[epoch] > t_recv:
                continue
            higher = [
                t for e, t in self._m_introduced.items() if e > epoch and t <= t_recv
            ]
            crashed = [
                self._m_crash_at[p]
                for p in config.sorted_members()
                if p in self._m_crash_at and self._m_crash_at[p] <= t_recv
            ]
            if not higher and not crashed:
                stable_samples.append(sample)

        downtime = []
        for epoch in sorted(self._m_epoch_set):
            t_set, leader, prior = self._m_epoch_set[epoch]
            entry = {
                "epoch": epoch,
                "from_epoch": prior,
                "disabled_at": t_set,
                "ready_at": self._m_ready.get(epoch),
                "delay": None,
                "applicable": False,
                "reason": None,
                "old_config_commit_in_window": False,
            }
            if entry["ready_at"] is not None:
                entry["delay"] = entry["ready_at"] - t_set
            old = self._m_configs.get(prior)
            if old is None or prior not in activation or activation[prior] > t_set:
                entry["reason"] = "previous configuration not activated"
            elif any(
                self._m_crash_at.get(p, t_set + 1) <= t_set for p in old.sorted_members()
            ):
                entry["reason"] = "previous configuration had a crashed member"
            else:
                entry["applicable"] = True
            first_probe = self._m_first_probe.get(epoch)
            if first_probe is not None:
                for c_epoch, _pos, ident, _t in self._m_commit_sends:
                    if c_epoch != prior:
                        continue
                    b = self._m_broadcast_at.get(ident)
                    if b is not None and first_probe < b[0] < t_set:
                        entry["old_config_commit_in_window"] = True
                        break
            downtime.append(entry)

        return {
            "steady_latency": {
                "max": max(stable_samples) if stable_samples else None,
                "samples": samples,
                "stable_samples": stable_samples,
            },
            "downtime": downtime,
            "activation": {str(e): t for e, t in sorted(activation.items())},
            "quiescent": quiescent,
            "steps": steps,
            "final_clock": self.now,
        }


def run_scenario(scenario: Scenario, mutation: Optional[str] = None) -> RunResult:
    return Simulator(scenario, mutation=mutation).run()
