"""Shared protocol vocabulary.

Process ids are plain ints.  Epochs are ints >= 0 for configurations; the -1
sentinel appears only in node-local counters (init_len, last_delivered).
Log positions are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional


class Mode(Enum):
    """Run-level operating mode, fixed for the lifetime of a run."""

    VAB = "vab"
    PO = "po"
    SPO = "spo"


class Status(Enum):
    LEADER = "leader"
    FOLLOWER = "follower"
    FRESH = "fresh"


@dataclass(frozen=True)
class Configuration:
    """An epoch together with its member set and distinguished leader."""

    epoch: int
    members: frozenset[int]
    leader: int

    def __post_init__(self):
        if self.epoch < 0:
            raise ValueError("configuration epochs are >= 0")
        if not self.members:
            raise ValueError("member set must be non-empty")
        if self.leader not in self.members:
            raise ValueError("leader must be a member")

    def sorted_members(self) -> list[int]:
        return sorted(self.members)


@dataclass(frozen=True)
class AppMessage:
    """Application message; identity is (origin, seq), payloads may repeat."""

    origin: int
    seq: int
    payload: str

    @property
    def ident(self) -> tuple[int, int]:
        return (self.origin, self.seq)


class MessageFactory:
    """Per-origin counters guaranteeing message identities never repeat in a run."""

    def __init__(self):
        self._counters: dict[int, int] = {}

    def fresh(self, origin: int, payload: str) -> AppMessage:
        seq = self._counters.get(origin, 0)
        self._counters[origin] = seq + 1
        return AppMessage(origin, seq, payload)


# Wire messages.  Logs travel as tuples of AppMessage-or-None so a snapshot in
# flight is immutable.

class Forward(NamedTuple):
    msg: AppMessage


class Accept(NamedTuple):
    epoch: int
    pos: int
    msg: AppMessage


class AcceptAck(NamedTuple):
    epoch: int
    pos: int


class Commit(NamedTuple):
    epoch: int
    pos: int


class Probe(NamedTuple):
    new_epoch: int
    probed_epoch: int


class ProbeAck(NamedTuple):
    flag: bool
    new_epoch: int


class NewConfig(NamedTuple):
    epoch: int
    members: frozenset[int]


class NewState(NamedTuple):
    epoch: int
    log: tuple
    members: frozenset[int]


class NewStateAck(NamedTuple):
    epoch: int


class Execute(NamedTuple):
    cmd_id: tuple[int, int]
    command: dict


class Result(NamedTuple):
    cmd_id: tuple[int, int]
    value: object


# Externally visible action kinds.

BROADCAST = "broadcast"
DELIVER = "deliver"
CONF_CHANGED = "conf_changed"
RECONFIG_REQ = "reconfig_req"
RECONFIG_RESP = "reconfig_resp"
INTRODUCTION = "introduction"

ACTION_KINDS = (
    BROADCAST,
    DELIVER,
    CONF_CHANGED,
    RECONFIG_REQ,
    RECONFIG_RESP,
    INTRODUCTION,
)


@dataclass
class HistEvent:
    """One externally visible action in the global history (1-based idx).

    ``config`` is None for a failed reconfig_resp.  ``spec`` is the sequence of
    speculatively delivered messages attached to a conf_changed: None when
    absent (followers, non-speculative modes), a possibly-empty tuple when
    present at a speculative-mode leader.
    """

    idx: int
    proc: int
    t: int
    kind: str
    msg: Optional[AppMessage] = None
    config: Optional[Configuration] = None
    spec: Optional[tuple[AppMessage, ...]] = None


History = list


def epoch_of(history: History, k: int) -> Optional[int]:
    """Epoch of the k-th action (1-based): the epoch of the latest conf_changed
    at the same process strictly before index k, or None if there is none."""
    if not 1 <= k <= len(history):
        raise IndexError(f"history index {k} out of range 1..{len(history)}")
    proc = history[k - 1].proc
    for j in range(k - 2, -1, -1):
        ev = history[j]
        if ev.proc == proc and ev.kind == CONF_CHANGED:
            return ev.config.epoch
    return None


def epochs_by_index(history: History) -> list[Optional[int]]:
    """epoch_of for every index in one pass; entry i corresponds to idx i+1."""
    current: dict[int, int] = {}
    out: list[Optional[int]] = []
    for ev in history:
        out.append(current.get(ev.proc))
        if ev.kind == CONF_CHANGED:
            current[ev.proc] = ev.config.epoch
    return out
