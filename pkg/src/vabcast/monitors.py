"""Online state monitors.

These watch wire sends and node state transitions during a run and flag
violations of the log-consistency invariants that the offline history checker
cannot see: committed entries surviving into higher epochs, state-transfer
provenance, accept uniqueness, commit/position agreement, and the
committed-state/speculative-state correspondence of the replication layer.

Checks are incremental: a commit record is compared against the nodes that
could contradict it at record time, and a node is re-compared whenever its
epoch or log changes, so a violation is reported at the first step it holds.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def _ident(m) -> tuple | None:
    return None if m is None else (m.origin, m.seq)


def _log_idents(log, upto: int) -> tuple:
    out = []
    for i in range(upto + 1):
        out.append(_ident(log[i]) if i < len(log) else None)
    return tuple(out)


@dataclass
class Violation:
    prop: str
    message: str
    witness: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"prop": self.prop, "message": self.message, "witness": self.witness}


class Monitors:
    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.violations: list[Violation] = []
        self._nodes: dict[int, object] = {}
        # commit sends: (epoch, pos, ident); plus first-seen maps for the lemmas
        self._commits: list[tuple[int, int, tuple]] = []
        self._commits_by_pos: dict[int, list[tuple[int, tuple]]] = {}
        self._first_commit_msg_at: dict[int, tuple] = {}
        self._first_commit_pos_of: dict[tuple, int] = {}
        # accept sends: key (epoch,pos) -> ident; ident -> (epoch,pos); prefix snapshots
        self._accepts: dict[tuple[int, int], tuple] = {}
        self._accept_of_msg: dict[tuple, tuple[int, int]] = {}
        self._accept_prefix: dict[tuple[int, int], tuple] = {}
        # who ever set epoch := e, and the membership of each introduced epoch
        self._epoch_setters: dict[int, set[int]] = {}
        self._memberships: dict[int, frozenset[int]] = {}
        self._new_config_events: list[tuple[int, int, int]] = []  # (epoch, proc, prior)
        # replication-layer snapshots for the state-correspondence invariant
        self._theta_at_broadcast: dict[tuple, object] = {}

    def attach_node(self, node) -> None:
        self._nodes[node.pid] = node

    def note_membership(self, config) -> None:
        self._memberships[config.epoch] = config.members

    def note_epoch_holder(self, pid: int, epoch: int) -> None:
        self._epoch_setters.setdefault(epoch, set()).add(pid)

    def _flag(self, prop: str, message: str, **witness) -> None:
        self.violations.append(Violation(prop, message, witness))

    # -- wire-send hooks -------------------------------------------------------

    def on_accept_send(self, pid: int, epoch: int, pos: int, m, log) -> None:
        if not self.enabled:
            return
        ident = _ident(m)
        key = (epoch, pos)
        prev = self._accepts.get(key)
        if prev is not None and prev != ident:
            self._flag(
                "Inv7",
                f"two ACCEPT({epoch},{pos},.) with different payloads",
                epoch=epoch, pos=pos, first=prev, second=ident,
            )
        else:
            self._accepts[key] = ident
        self._accept_of_msg.setdefault(ident, key)
        self._accept_prefix[key] = _log_idents(log, pos)

    def on_commit_send(self, pid: int, epoch: int, pos: int, m) -> None:
        if not self.enabled:
            return
        ident = _ident(m)
        prev = self._first_commit_msg_at.get(pos)
        if prev is not None and prev != ident:
            self._flag(
                "CommitMsg",
                f"COMMITs for position {pos} sent while holding different messages",
                pos=pos, first=prev, second=ident,
            )
        else:
            self._first_commit_msg_at[pos] = ident
        prev_pos = self._first_commit_pos_of.get(ident)
        if prev_pos is not None and prev_pos != pos:
            self._flag(
                "CommitPos",
                f"message {ident} committed at two positions",
                ident=ident, first=prev_pos, second=pos,
            )
        else:
            self._first_commit_pos_of[ident] = pos
        self._commits.append((epoch, pos, ident))
        self._commits_by_pos.setdefault(pos, []).append((epoch, ident))
        # a fresh commit record must already hold at every higher-epoch node
        for node in self._nodes.values():
            if node.epoch > epoch:
                self._check_node_against(node, epoch, pos, ident)

    def on_new_state_send(self, pid: int, epoch: int, log: tuple) -> None:
        if not self.enabled:
            return
        for k, m in enumerate(log):
            if m is None:
                continue
            ident = _ident(m)
            origin = self._accept_of_msg.get(ident)
            if origin is None or origin[1] != k or origin[0] >= epoch:
                self._flag(
                    "Inv4",
                    f"NEW_STATE({epoch}) entry {k} lacks a prior lower-epoch ACCEPT",
                    epoch=epoch, pos=k, ident=ident, accept=origin,
                )

    def on_new_config_processing(self, pid: int, epoch: int, prior_epoch: int) -> None:
        if not self.enabled:
            return
        self._new_config_events.append((epoch, pid, prior_epoch))

    # -- node-state hooks ------------------------------------------------------

    def on_slot_write(self, node, pos: int) -> None:
        if not self.enabled:
            return
        for epoch, ident in self._commits_by_pos.get(pos, ()):
            if node.epoch > epoch:
                self._check_node_against(node, epoch, pos, ident)

    def on_log_replaced(self, node) -> None:
        if not self.enabled:
            return
        self.note_epoch_holder(node.pid, node.epoch)
        self._recheck_all(node)
        # inherited entries must match the prefix the accepting leader held
        for (epoch, pos), ident in self._accepts.items():
            if node.epoch > epoch and pos < len(node.log) and _ident(node.log[pos]) == ident:
                have = _log_idents(node.log, pos)
                want = self._accept_prefix[(epoch, pos)]
                if have != want:
                    self._flag(
                        "Inv5",
                        f"log prefix up to {pos} diverges from the ACCEPT({epoch},{pos}) sender's",
                        pid=node.pid, epoch=epoch, pos=pos, have=have, want=want,
                    )

    def on_epoch_raised(self, node) -> None:
        if not self.enabled:
            return
        self.note_epoch_holder(node.pid, node.epoch)
        self._recheck_all(node)

    def after_accept_handled(self, node, epoch: int, pos: int) -> None:
        if not self.enabled:
            return
        want = self._accept_prefix.get((epoch, pos))
        if want is None:
            return
        have = _log_idents(node.log, pos)
        if have != want:
            self._flag(
                "Inv6",
                f"after ACCEPT({epoch},{pos}) the follower prefix diverges from the leader's",
                pid=node.pid, epoch=epoch, pos=pos, have=have, want=want,
            )

    def after_new_state_handled(self, node, epoch: int) -> None:
        # prefix agreement after a state transfer is covered by on_log_replaced
        return

    def on_deliver(self, pid: int, epoch: int, pos: int, m) -> None:
        if not self.enabled:
            return
        ident = _ident(m)
        origin = self._accept_of_msg.get(ident)
        if origin is not None and epoch >= origin[0] and origin[1] != pos:
            self._flag(
                "Inv8",
                f"message {ident} accepted at {origin[1]} but delivered at {pos}",
                pid=pid, ident=ident, accept_pos=origin[1], deliver_pos=pos,
            )

    def _recheck_all(self, node) -> None:
        for epoch, pos, ident in self._commits:
            if node.epoch > epoch:
                self._check_node_against(node, epoch, pos, ident)

    def _check_node_against(self, node, epoch: int, pos: int, ident: tuple) -> None:
        have = _ident(node.log[pos]) if pos < len(node.log) else None
        if have != ident:
            self._flag(
                "Inv1",
                f"p{node.pid} at epoch {node.epoch} holds {have} at {pos}, "
                f"but ({epoch},{pos}) committed {ident}",
                pid=node.pid, node_epoch=node.epoch, commit_epoch=epoch,
                pos=pos, have=have, want=ident,
            )

    # -- replication-layer state correspondence --------------------------------

    def on_app_broadcast(self, ident: tuple, theta_before) -> None:
        self._theta_at_broadcast[ident] = theta_before

    def on_app_deliver(self, pid: int, ident: tuple, sigma_before) -> None:
        if ident not in self._theta_at_broadcast:
            return
        want = self._theta_at_broadcast[ident]
        if sigma_before != want:
            self._flag(
                "Inv2",
                f"p{pid} applied update {ident} to committed state {sigma_before!r}, "
                f"generated against speculative state {want!r}",
                pid=pid, ident=ident, committed=sigma_before, speculative=want,
            )

    # -- end-of-run checks -------------------------------------------------------

    def finalize(self) -> list[Violation]:
        fully_initialized = [
            e
            for e, members in self._memberships.items()
            if members <= self._epoch_setters.get(e, set())
        ]
        for new_epoch, pid, prior in self._new_config_events:
            for e in fully_initialized:
                if e < new_epoch and prior < e:
                    self._flag(
                        "Inv3",
                        f"leader p{pid} of epoch {new_epoch} had epoch {prior} < {e} "
                        f"although {e} was initialized at all its members",
                        pid=pid, new_epoch=new_epoch, prior=prior, activated=e,
                    )
        return self.violations
