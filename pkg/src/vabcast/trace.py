"""Trace files: one JSON object per history action, bit-exact.

Schema (field order is fixed):
  {"idx": int, "proc": int, "t": int, "action": str,
   "msg": {"origin": int, "seq": int, "payload": str},      broadcast/deliver
   "config": {"epoch": int, "members": [int], "leader": int} or null,
   "spec": [msg, ...] or null}                              conf_changed only
"""

from __future__ import annotations

import json

from .model import (
    ACTION_KINDS,
    AppMessage,
    BROADCAST,
    CONF_CHANGED,
    Configuration,
    DELIVER,
    HistEvent,
    INTRODUCTION,
    RECONFIG_RESP,
)


class TraceError(Exception):
    pass


def _msg_obj(m: AppMessage) -> dict:
    return {"origin": m.origin, "seq": m.seq, "payload": m.payload}


def _config_obj(c: Configuration) -> dict:
    return {"epoch": c.epoch, "members": c.sorted_members(), "leader": c.leader}


def serialize_event(ev: HistEvent) -> str:
    obj = {"idx": ev.idx, "proc": ev.proc, "t": ev.t, "action": ev.kind}
    if ev.kind in (BROADCAST, DELIVER):
        obj["msg"] = _msg_obj(ev.msg)
    elif ev.kind in (CONF_CHANGED, INTRODUCTION, RECONFIG_RESP):
        obj["config"] = None if ev.config is None else _config_obj(ev.config)
        if ev.kind == CONF_CHANGED:
            obj["spec"] = (
                None if ev.spec is None else [_msg_obj(m) for m in ev.spec]
            )
    return json.dumps(obj, separators=(",", ":"))


def serialize_history(history) -> str:
    return "".join(serialize_event(ev) + "\n" for ev in history)


def write_trace(history, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_history(history))


def _parse_msg(obj) -> AppMessage:
    return AppMessage(obj["origin"], obj["seq"], obj["payload"])


def parse_trace(text: str) -> list[HistEvent]:
    history: list[HistEvent] = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceError(f"line {n}: not JSON: {exc}") from exc
        try:
            kind = obj["action"]
            if kind not in ACTION_KINDS:
                raise TraceError(f"line {n}: unknown action {kind!r}")
            msg = _parse_msg(obj["msg"]) if "msg" in obj else None
            config = None
            if obj.get("config") is not None:
                c = obj["config"]
                config = Configuration(c["epoch"], frozenset(c["members"]), c["leader"])
            spec = None
            if kind == CONF_CHANGED and obj.get("spec") is not None:
                spec = tuple(_parse_msg(m) for m in obj["spec"])
            ev = HistEvent(obj["idx"], obj["proc"], obj["t"], kind,
                           msg=msg, config=config, spec=spec)
        except (KeyError, TypeError, ValueError) as exc:
            raise TraceError(f"line {n}: malformed record: {exc}") from exc
        if ev.idx != len(history) + 1:
            raise TraceError(f"line {n}: indices must be dense from 1")
        history.append(ev)
    return history


def read_trace(path) -> list[HistEvent]:
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh.read())
