"""Passive replication over the broadcast layer.

The leader executes commands against a speculative state and broadcasts the
resulting state update; every replica applies delivered updates to a committed
state and answers the command's origin.  On a configuration change the new
leader rebases its speculative state on the committed one, replaying any
speculatively delivered updates handed over by the broadcast layer.

Two bundled state machines: a counter (increment/read) and a register assigned
from a seeded generator, standing in for genuinely non-deterministic commands.
Updates are absolute assignments so they are incremental with respect to the
state they were generated in.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Optional

from .model import AppMessage, Configuration, Execute, Result


class StateMachine:
    name = "abstract"

    def initial(self):
        raise NotImplementedError

    def execute(self, state, command: dict, rng: random.Random):
        """Return (result, delta); nondeterminism enters only through rng."""
        raise NotImplementedError

    def apply(self, state, delta):
        raise NotImplementedError

    def result_valid(self, state, command: dict, result):
        """Sequential-specification step used by the linearizability oracle:
        return the successor state if `result` is a legal outcome of running
        `command` atomically in `state`, else None."""
        raise NotImplementedError


class CounterMachine(StateMachine):
    """Replicated counter: increment acknowledges, read returns the value."""

    name = "counter"

    def initial(self):
        return 0

    def execute(self, state, command, rng):
        kind = command["kind"]
        if kind == "inc":
            return "ack", ("set", state + 1)
        if kind == "read":
            return state, ("noop",)
        raise ValueError(f"unknown counter command {kind!r}")

    def apply(self, state, delta):
        return delta[1] if delta[0] == "set" else state

    def result_valid(self, state, command, result):
        kind = command["kind"]
        if kind == "inc":
            return state + 1 if result == "ack" else None
        if kind == "read":
            return state if result == state else None
        return None


class RandomAssignMachine(StateMachine):
    """Register assigned from a seeded generator; read returns the value."""

    name = "random_assign"

    def initial(self):
        return 0

    def execute(self, state, command, rng):
        kind = command["kind"]
        if kind == "assign":
            v = rng.randrange(1000)
            return v, ("set", v)
        if kind == "read":
            return state, ("noop",)
        raise ValueError(f"unknown register command {kind!r}")

    def apply(self, state, delta):
        return delta[1] if delta[0] == "set" else state

    def result_valid(self, state, command, result):
        kind = command["kind"]
        if kind == "assign":
            # any value is a legal outcome; the state becomes that value
            return result if isinstance(result, int) else None
        if kind == "read":
            return state if result == state else None
        return None


MACHINES = {m.name: m for m in (CounterMachine(), RandomAssignMachine())}


def encode_update(cmd_id, result, delta) -> str:
    return json.dumps(
        {"id": list(cmd_id), "r": result, "d": list(delta)}, separators=(",", ":")
    )


def decode_update(payload: str):
    obj = json.loads(payload)
    return tuple(obj["id"]), obj["r"], tuple(obj["d"])


@dataclass
class ClientOp:
    """One client-visible operation for the linearizability record."""

    cmd_id: tuple[int, int]
    client: int
    command: dict
    invoked_at: int
    result: object = None
    completed_at: Optional[int] = None

    @property
    def completed(self) -> bool:
        return self.completed_at is not None


class Replica:
    """Per-process replication state: committed and speculative service state."""

    def __init__(self, pid: int, machine: StateMachine, ctx, initial_leader: int):
        self.pid = pid
        self.machine = machine
        self.ctx = ctx
        self.cur_epoch = 0
        self.cur_leader = initial_leader
        self.committed = machine.initial()
        self.speculative = machine.initial()
        self._next_cmd = 0

    # -- client side -----------------------------------------------------------

    def client_execute(self, command: dict) -> ClientOp:
        cmd_id = (self.pid, self._next_cmd)
        self._next_cmd += 1
        op = ClientOp(cmd_id, self.pid, command, self.ctx.now)
        self.ctx.record_op(op)
        self.ctx.send(self.pid, self.cur_leader, Execute(cmd_id, command))
        return op

    def on_result(self, cmd_id, value) -> None:
        self.ctx.complete_op(cmd_id, value)

    # -- replica side ------------------------------------------------------------

    def execute_enabled(self) -> bool:
        return self.cur_leader == self.pid

    def on_execute(self, cmd_id, command) -> None:
        theta_before = self.speculative
        result, delta = self.machine.execute(self.speculative, command, self.ctx.app_rng)
        self.speculative = self.machine.apply(self.speculative, delta)
        msg = self.ctx.app_broadcast(self.pid, encode_update(cmd_id, result, delta))
        if msg is not None:
            self.ctx.monitors.on_app_broadcast(msg.ident, theta_before)

    def on_deliver(self, m: AppMessage) -> None:
        cmd_id, result, delta = decode_update(m.payload)
        self.ctx.monitors.on_app_deliver(self.pid, m.ident, self.committed)
        self.committed = self.machine.apply(self.committed, delta)
        self.ctx.send(self.pid, cmd_id[0], Result(cmd_id, result))

    def on_conf_changed(self, config: Configuration, spec) -> None:
        self.cur_epoch = config.epoch
        self.cur_leader = config.leader
        if self.pid == config.leader:
            self.speculative = self.committed
            for m in spec or ():
                _, _, delta = decode_update(m.payload)
                self.speculative = self.machine.apply(self.speculative, delta)
