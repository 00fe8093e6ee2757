"""Per-process broadcast state machine.

Every wire message is a guarded command: when the guard is false the message
is buffered and re-evaluated after each local state change, and it is dropped
once the guard can provably never fire again (epochs only grow).  The handlers
follow the normal-path append/ack/commit cycle plus the probing-based
reconfiguration transitions.

Mode hooks:
  - VAB: conf_changed fires inside the NEW_CONFIG / NEW_STATE handlers, and any
    member may submit a broadcast (forwarded to the leader).
  - PO:  conf_changed is deferred until the inherited log prefix is delivered
    (the new leader additionally waits for all state acks), and only the leader
    may broadcast.
  - SPO: like VAB timing, but the new leader's conf_changed carries the slice
    of its log that it has not yet delivered (speculative delivery); only the
    leader may broadcast.
"""

from __future__ import annotations

from .model import (
    Accept,
    AcceptAck,
    AppMessage,
    Commit,
    Configuration,
    Execute,
    Forward,
    Mode,
    NewConfig,
    NewState,
    NewStateAck,
    Probe,
    ProbeAck,
    Result,
    Status,
)

_ENABLED = 0
_WAIT = 1
_DEAD = 2


class Node:
    def __init__(self, pid: int, ctx):
        self.pid = pid
        self.ctx = ctx
        self.epoch = 0
        self.new_epoch = 0
        self.next_pos = 0
        self.init_len = -1
        self.last_delivered = -1
        self.members: frozenset[int] = frozenset()
        self.leader: int | None = None
        self.log: list[AppMessage | None] = []
        self.status = Status.FRESH
        self.ready = False  # may the leader broadcast (PO defers this)
        self._buffer: list[tuple] = []
        self._accept_acks: dict[tuple[int, int], set[int]] = {}
        self._state_acks: set[int] = set()
        # (config, replay_goal, is_leader, evidence) while a PO conf_changed is
        # pending; evidence means the epoch's ack round is known to be complete
        self._po_pending: tuple | None = None

    def bootstrap(self, config: Configuration) -> None:
        """Join the pre-seeded initial configuration as leader or follower."""
        self.members = config.members
        self.leader = config.leader
        self.status = Status.LEADER if config.leader == self.pid else Status.FOLLOWER
        self.ready = self.status is Status.LEADER

    # -- client-facing operations -------------------------------------------

    def broadcast_request(self, m: AppMessage) -> bool:
        """VAB submission path: record the broadcast and forward to the leader."""
        if self.status is Status.FRESH or self.leader is None:
            self.ctx.warn(f"p{self.pid}: broadcast rejected, no known leader")
            return False
        self.ctx.emit_broadcast(self.pid, m)
        self.ctx.send(self.pid, self.leader, Forward(m))
        return True

    def leader_broadcast(self, m: AppMessage) -> bool:
        """PO/SPO submission path: only a broadcast-ready leader may call this."""
        if self.status is not Status.LEADER or not self.ready:
            self.ctx.warn(f"p{self.pid}: leader_broadcast rejected, not a ready leader")
            return False
        self.ctx.emit_broadcast(self.pid, m)
        self._append_and_fan_out(m)
        return True

    # -- message intake ------------------------------------------------------

    def receive(self, wire, src: int) -> None:
        if self._po_pending is not None and isinstance(wire, (Accept, Commit, NewState)):
            # the new leader sends replay COMMITs, fresh ACCEPTs, or (for an
            # empty replay) a repeated state transfer only after collecting
            # every state ack, so any of them proves that all members of the
            # pending epoch hold the leader's log; noted even when the message
            # itself is a stale no-op
            config = self._po_pending[0]
            if wire.epoch == config.epoch:
                self._po_pending = self._po_pending[:3] + (True,)
        self._buffer.append((wire, src))
        self._pump()
        self._maybe_fire_po_pending()

    def _pump(self) -> None:
        progressed = True
        while progressed:
            progressed = False
            i = 0
            while i < len(self._buffer):
                wire, src = self._buffer[i]
                disp = self._classify(wire)
                if disp == _DEAD:
                    self._buffer.pop(i)
                    continue
                if disp == _ENABLED:
                    self._buffer.pop(i)
                    self._execute(wire, src)
                    progressed = True
                    break
                i += 1

    def _classify(self, wire) -> int:
        if isinstance(wire, Forward):
            if self.ctx.mode is not Mode.VAB:
                return _DEAD  # submission goes through leader_broadcast instead
            return _ENABLED if self.status is Status.LEADER else _WAIT
        if isinstance(wire, Accept):
            if self.epoch > wire.epoch:
                return _DEAD
            if self.status is Status.FOLLOWER and self.epoch == wire.epoch:
                return _ENABLED
            return _WAIT
        if isinstance(wire, AcceptAck):
            if self.epoch > wire.epoch:
                return _DEAD
            if self.status is Status.LEADER and self.epoch == wire.epoch:
                return _ENABLED
            return _WAIT
        if isinstance(wire, Commit):
            if self.epoch > wire.epoch or wire.pos <= self.last_delivered:
                return _DEAD
            if (
                self.status in (Status.LEADER, Status.FOLLOWER)
                and self.epoch == wire.epoch
                and wire.pos == self.last_delivered + 1
            ):
                return _ENABLED
            return _WAIT
        if isinstance(wire, Probe):
            if wire.new_epoch < self.new_epoch:
                return _DEAD
            return _ENABLED
        if isinstance(wire, NewConfig):
            if self.new_epoch > wire.epoch:
                return _DEAD
            return _ENABLED if self.new_epoch == wire.epoch else _WAIT
        if isinstance(wire, NewState):
            if self.new_epoch > wire.epoch:
                return _DEAD
            return _ENABLED
        if isinstance(wire, NewStateAck):
            if self.epoch > wire.epoch:
                return _DEAD
            if (
                self.status is Status.LEADER
                and self.epoch == wire.epoch
                and self.new_epoch == wire.epoch
            ):
                return _ENABLED
            return _WAIT
        if isinstance(wire, Execute):
            return _ENABLED if self.ctx.app_execute_enabled(self.pid) else _WAIT
        if isinstance(wire, Result):
            return _ENABLED
        return _DEAD

    def _execute(self, wire, src: int) -> None:
        if isinstance(wire, Forward):
            self._append_and_fan_out(wire.msg)
        elif isinstance(wire, Accept):
            self._on_accept(wire, src)
        elif isinstance(wire, AcceptAck):
            self._on_accept_ack(wire, src)
        elif isinstance(wire, Commit):
            self._on_commit(wire)
        elif isinstance(wire, Probe):
            self._on_probe(wire, src)
        elif isinstance(wire, NewConfig):
            self._on_new_config(wire)
        elif isinstance(wire, NewState):
            self._on_new_state(wire, src)
        elif isinstance(wire, NewStateAck):
            self._on_new_state_ack(wire, src)
        elif isinstance(wire, Execute):
            self.ctx.app_on_execute(self.pid, wire.cmd_id, wire.command)
        elif isinstance(wire, Result):
            self.ctx.app_on_result(self.pid, wire.cmd_id, wire.value)

    # -- normal operation ----------------------------------------------------

    def _append_and_fan_out(self, m: AppMessage) -> None:
        k = self.next_pos
        self._write_slot(k, m)
        self.ctx.note_leader_append(self.pid, m, self.epoch)
        self.ctx.monitors.on_accept_send(self.pid, self.epoch, k, m, self.log)
        followers = [p for p in sorted(self.members) if p != self.pid]
        for dst in followers:
            self.ctx.send(self.pid, dst, Accept(self.epoch, k, m))
        self.next_pos = k + 1
        if not followers:
            # singleton configuration: the all-followers ack guard is vacuous
            self._send_commit(self.epoch, k)

    def _on_accept(self, wire: Accept, src: int) -> None:
        self._write_slot(wire.pos, wire.msg)
        self.ctx.monitors.after_accept_handled(self, wire.epoch, wire.pos)
        self.ctx.send(self.pid, src, AcceptAck(wire.epoch, wire.pos))

    def _on_accept_ack(self, wire: AcceptAck, src: int) -> None:
        key = (wire.epoch, wire.pos)
        acks = self._accept_acks.setdefault(key, set())
        acks.add(src)
        if acks >= self.members - {self.pid}:
            del self._accept_acks[key]
            self._send_commit(wire.epoch, wire.pos)

    def _send_commit(self, epoch: int, pos: int) -> None:
        self.ctx.note_commit_send(self.pid, epoch, pos, self.log[pos])
        self.ctx.monitors.on_commit_send(self.pid, epoch, pos, self.log[pos])
        for dst in sorted(self.members):
            self.ctx.send(self.pid, dst, Commit(epoch, pos))

    def _on_commit(self, wire: Commit) -> None:
        self.last_delivered = wire.pos
        m = self.log[wire.pos]
        self.ctx.monitors.on_deliver(self.pid, wire.epoch, wire.pos, m)
        self.ctx.emit_deliver(self.pid, m)
        self._maybe_fire_po_pending()

    # -- reconfiguration -----------------------------------------------------

    def _on_probe(self, wire: Probe, src: int) -> None:
        self.new_epoch = wire.new_epoch
        flag = self.epoch >= wire.probed_epoch
        self.ctx.send(self.pid, src, ProbeAck(flag, wire.new_epoch))

    def _on_new_config(self, wire: NewConfig) -> None:
        prior_epoch = self.epoch
        self.ctx.monitors.on_new_config_processing(self.pid, wire.epoch, prior_epoch)
        self.status = Status.LEADER
        self.epoch = wire.epoch
        self.members = wire.members
        self.leader = self.pid
        self.next_pos = self._highest_filled() + 1
        self.init_len = self.next_pos - 1
        self._reset_ack_trackers()
        self.ctx.monitors.on_epoch_raised(self)
        self.ctx.note_epoch_set(self.pid, wire.epoch, prior_epoch)
        config = Configuration(wire.epoch, wire.members, self.pid)

        mode = self.ctx.mode
        if mode is Mode.VAB:
            self.ready = True
            self.ctx.emit_conf_changed(self.pid, config, None)
        elif mode is Mode.SPO:
            sigma = tuple(self.log[self.last_delivered + 1 : self.init_len + 1])
            self.ready = True
            self.ctx.emit_conf_changed(self.pid, config, sigma)
        else:  # PO: defer until acks are in and the inherited prefix is delivered
            self.ready = False
            self._po_pending = (config, self.init_len, True, False)

        snapshot = tuple(self.log[: self.next_pos])
        self.ctx.monitors.on_new_state_send(self.pid, wire.epoch, snapshot)
        others = [p for p in sorted(wire.members) if p != self.pid]
        for dst in others:
            self.ctx.send(self.pid, dst, NewState(wire.epoch, snapshot, wire.members))
        if not others:
            self._on_all_state_acks(wire.epoch)

    def _on_new_state(self, wire: NewState, src: int) -> None:
        if self.epoch == wire.epoch:
            # repeated transfer for an epoch this node already holds: it only
            # served as activation evidence (consumed in receive)
            return
        prior_epoch = self.epoch
        self.status = Status.FOLLOWER
        self.epoch = wire.epoch
        self.new_epoch = wire.epoch
        self.log = list(wire.log)
        self.leader = src
        self.ready = False
        self._reset_ack_trackers()
        self.ctx.monitors.on_log_replaced(self)
        self.ctx.monitors.after_new_state_handled(self, wire.epoch)
        self.ctx.note_epoch_set(self.pid, wire.epoch, prior_epoch)
        config = Configuration(wire.epoch, wire.members, src)

        mode = self.ctx.mode
        if mode is Mode.PO:
            self._po_pending = (config, self._highest_filled(), False, False)
            self._maybe_fire_po_pending()
        else:
            # SPO followers never speculatively deliver; VAB carries no sigma
            self.ctx.emit_conf_changed(self.pid, config, None)
        self.ctx.send(self.pid, src, NewStateAck(wire.epoch))

    def _on_new_state_ack(self, wire: NewStateAck, src: int) -> None:
        self._state_acks.add(src)
        if self._state_acks >= self.members - {self.pid}:
            self._on_all_state_acks(wire.epoch)

    def _on_all_state_acks(self, epoch: int) -> None:
        if self.ctx.mutation != "no-commit-replay":
            for k in range(0, self.init_len + 1):
                self._send_commit(epoch, k)
        if self.ctx.mode is Mode.PO and self.init_len < 0:
            # an empty replay carries no COMMIT for the followers to learn
            # that the ack round completed; re-ship the (empty) state as the
            # activation signal instead
            snapshot = tuple(self.log[: self.next_pos])
            self.ctx.monitors.on_new_state_send(self.pid, epoch, snapshot)
            for dst in sorted(self.members - {self.pid}):
                self.ctx.send(self.pid, dst, NewState(epoch, snapshot, self.members))
        if self._po_pending is not None:
            config, goal, is_leader, _ = self._po_pending
            self._po_pending = (config, goal, is_leader, True)
            self._maybe_fire_po_pending()

    def _maybe_fire_po_pending(self) -> None:
        if self._po_pending is None:
            return
        config, goal, _is_leader, evidence = self._po_pending
        if not evidence or self.last_delivered < goal:
            return
        self._po_pending = None
        if self.status is Status.LEADER:
            self.ready = True
        self.ctx.emit_conf_changed(self.pid, config, None)

    # -- helpers ---------------------------------------------------------------

    def _write_slot(self, pos: int, m: AppMessage) -> None:
        while len(self.log) <= pos:
            self.log.append(None)
        self.log[pos] = m
        self.ctx.monitors.on_slot_write(self, pos)

    def _highest_filled(self) -> int:
        for i in range(len(self.log) - 1, -1, -1):
            if self.log[i] is not None:
                return i
        return -1

    def _reset_ack_trackers(self) -> None:
        self._accept_acks.clear()
        self._state_acks = set()
