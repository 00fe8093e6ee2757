"""Offline history checker.

Evaluates the full broadcast specification over a finished history: the basic
configuration-change properties, Integrity / Total Order / Agreement, the
liveness guarantees under a statically computed premise, the primary-order
properties (Local Order, Global Order, Primary Integrity), and the
speculative-delivery properties.  A brute-force evaluator that enumerates the
safety quantifiers directly is kept alongside as an oracle for the optimized
checks, and a bounded exhaustive linearizability search covers the replication
layer.

Each violation carries a minimal witness (history indices and ids) sufficient
to re-derive the failure by hand.
"""

from __future__ import annotations

from typing import Optional

from .model import (
    BROADCAST,
    CONF_CHANGED,
    DELIVER,
    HistEvent,
    INTRODUCTION,
    Mode,
    RECONFIG_REQ,
    RECONFIG_RESP,
    epochs_by_index,
)
from .monitors import Violation
from .scenario import LivenessPremise


def _v(prop: str, message: str, **witness) -> Violation:
    return Violation(prop, message, witness)


def _delivery_seqs(history) -> dict[int, list[tuple[int, tuple]]]:
    """proc -> [(idx, ident)] in delivery order."""
    seqs: dict[int, list[tuple[int, tuple]]] = {}
    for ev in history:
        if ev.kind == DELIVER:
            seqs.setdefault(ev.proc, []).append((ev.idx, ev.msg.ident))
    return seqs


# -- basic configuration-change properties -------------------------------------------


def check_basic_config(history) -> list[Violation]:
    out: list[Violation] = []
    by_epoch: dict[int, tuple] = {}
    last_epoch_at: dict[int, tuple[int, int]] = {}
    intro_at: dict[tuple, int] = {}
    open_reqs: dict[int, int] = {}
    intros_in_call: dict[int, int] = {}

    for ev in history:
        if ev.kind == INTRODUCTION:
            key = (ev.config.epoch, ev.config.members, ev.config.leader)
            if key in intro_at:
                out.append(_v(
                    "P1d", "configuration introduced twice",
                    epoch=ev.config.epoch, first=intro_at[key], second=ev.idx,
                ))
            else:
                intro_at[key] = ev.idx
            if ev.config.epoch > 0:  # the epoch-0 bootstrap is pre-seeded
                if ev.proc not in open_reqs:
                    out.append(_v(
                        "WF", f"introduction at p{ev.proc} outside a reconfigure call",
                        idx=ev.idx,
                    ))
                elif intros_in_call.get(ev.proc, 0) >= 1:
                    out.append(_v(
                        "WF", f"p{ev.proc} introduced twice in one reconfigure call",
                        idx=ev.idx,
                    ))
                else:
                    intros_in_call[ev.proc] = intros_in_call.get(ev.proc, 0) + 1
        elif ev.kind == CONF_CHANGED:
            cfg = ev.config
            seen = by_epoch.get(cfg.epoch)
            if seen is None:
                by_epoch[cfg.epoch] = (cfg.members, cfg.leader, ev.idx)
            elif seen[0] != cfg.members or seen[1] != cfg.leader:
                out.append(_v(
                    "P1a", f"epoch {cfg.epoch} announced with two configurations",
                    epoch=cfg.epoch, first=seen[2], second=ev.idx,
                ))
            if ev.proc not in cfg.members:
                out.append(_v(
                    "P1b", f"p{ev.proc} joined a configuration it is not a member of",
                    idx=ev.idx, proc=ev.proc, epoch=cfg.epoch,
                ))
            prev = last_epoch_at.get(ev.proc)
            if prev is not None and cfg.epoch <= prev[0]:
                out.append(_v(
                    "P1c", f"p{ev.proc} joined epochs out of order",
                    proc=ev.proc, first=prev[1], second=ev.idx,
                ))
            last_epoch_at[ev.proc] = (cfg.epoch, ev.idx)
            key = (cfg.epoch, cfg.members, cfg.leader)
            if key not in intro_at or intro_at[key] > ev.idx:
                out.append(_v(
                    "P1d", f"conf_changed at p{ev.proc} without prior introduction",
                    idx=ev.idx, epoch=cfg.epoch,
                ))
        elif ev.kind == RECONFIG_REQ:
            if ev.proc in open_reqs:
                out.append(_v(
                    "WF", f"p{ev.proc} issued overlapping reconfigure calls",
                    first=open_reqs[ev.proc], second=ev.idx,
                ))
            open_reqs[ev.proc] = ev.idx
            intros_in_call[ev.proc] = 0
        elif ev.kind == RECONFIG_RESP:
            if ev.proc not in open_reqs:
                out.append(_v(
                    "WF", f"reconfig_resp at p{ev.proc} without a pending request",
                    idx=ev.idx,
                ))
            else:
                del open_reqs[ev.proc]
    return out


# -- safety: Integrity / Total Order / Agreement -------------------------------------


def check_safety(history) -> list[Violation]:
    out: list[Violation] = []
    broadcast_at: dict[tuple, int] = {}
    for ev in history:
        if ev.kind == BROADCAST:
            broadcast_at.setdefault(ev.msg.ident, ev.idx)

    seqs = _delivery_seqs(history)
    seen_pairs: dict[tuple[int, tuple], int] = {}
    duplicates = []
    for ev in history:
        if ev.kind != DELIVER:
            continue
        key = (ev.proc, ev.msg.ident)
        if key in seen_pairs:
            out.append(_v(
                "P2-Integrity", f"p{ev.proc} delivered {ev.msg.ident} twice",
                first=seen_pairs[key], second=ev.idx,
            ))
            duplicates.append(key)
            continue
        seen_pairs[key] = ev.idx
        b = broadcast_at.get(ev.msg.ident)
        if b is None or b >= ev.idx:
            out.append(_v(
                "P2-Integrity",
                f"p{ev.proc} delivered {ev.msg.ident} never broadcast before",
                idx=ev.idx, broadcast=b,
            ))

    # Total Order: walking i's deliveries, any message j also delivers must be
    # preceded in j by everything i delivered before it
    procs = sorted(seqs)
    total_order_ok = True
    for proc, ident in duplicates:
        # a repeat delivery instantiates the order quantifier with m1 = m2:
        # the first delivery of the pair has no earlier delivery to point at
        total_order_ok = False
        out.append(_v(
            "P3-TotalOrder",
            f"p{proc} delivered {ident} twice, contradicting its own order",
            proc=proc, ident=ident,
        ))
    for i in procs:
        for j in procs:
            if i == j:
                continue
            pos_j = {ident: n for n, (_, ident) in enumerate(seqs[j])}
            missing_before: Optional[tuple] = None
            max_pos = -1
            for _, ident in seqs[i]:
                if ident in pos_j:
                    if missing_before is not None:
                        total_order_ok = False
                        out.append(_v(
                            "P3-TotalOrder",
                            f"p{j} delivered {ident} but not {missing_before}, "
                            f"which p{i} delivered earlier",
                            i=i, j=j, later=ident, earlier=missing_before,
                        ))
                        break
                    if pos_j[ident] < max_pos:
                        total_order_ok = False
                        out.append(_v(
                            "P3-TotalOrder",
                            f"p{i} and p{j} delivered {ident} in contradictory orders",
                            i=i, j=j, ident=ident,
                        ))
                        break
                    max_pos = pos_j[ident]
                elif missing_before is None:
                    missing_before = ident
    out.extend(_check_agreement(seqs, prefix_form=total_order_ok))
    return out


def _check_agreement(seqs, prefix_form: bool) -> list[Violation]:
    out = []
    procs = sorted(seqs)
    if prefix_form and procs:
        # with Total Order and Integrity intact, agreement reduces to every
        # delivery sequence being a prefix of the longest
        longest_proc = max(procs, key=lambda p: (len(seqs[p]), p))
        longest = [ident for _, ident in seqs[longest_proc]]
        for p in procs:
            mine = [ident for _, ident in seqs[p]]
            if mine != longest[: len(mine)]:
                k = next(
                    (n for n, (a, b) in enumerate(zip(mine, longest)) if a != b),
                    min(len(mine), len(longest)),
                )
                out.append(_v(
                    "P4-Agreement",
                    f"p{p}'s deliveries are not a prefix of p{longest_proc}'s",
                    proc=p, other=longest_proc, position=k,
                ))
        return out
    for a in procs:
        for b in procs:
            if a >= b:
                continue
            sa = {ident for _, ident in seqs[a]}
            sb = {ident for _, ident in seqs[b]}
            if not (sa <= sb or sb <= sa):
                m1 = sorted(sa - sb)[0]
                m2 = sorted(sb - sa)[0]
                out.append(_v(
                    "P4-Agreement",
                    f"p{a} delivered {m1} and p{b} delivered {m2}, neither the other",
                    i=a, j=b, m1=m1, m2=m2,
                ))
    return out


# -- liveness -------------------------------------------------------------------------


def check_liveness(history, premise: LivenessPremise) -> list[Violation]:
    """Guarantees for the last reconfiguration; only meaningful when the
    premise holds and the run is quiescent (the caller gates on both)."""
    out: list[Violation] = []
    reqs = [ev for ev in history if ev.kind == RECONFIG_REQ]
    if not reqs:
        return [_v("P5-Termination", "no reconfiguration request in history")]
    last_req = reqs[-1]
    resp = next(
        (ev for ev in history
         if ev.kind == RECONFIG_RESP and ev.proc == last_req.proc
         and ev.idx > last_req.idx),
        None,
    )
    if resp is None or resp.config is None:
        out.append(_v(
            "P5-Termination",
            "last reconfiguration did not introduce a configuration",
            req=last_req.idx, resp=None if resp is None else resp.idx,
        ))
        return out
    config = resp.config
    if not any(
        ev.kind == INTRODUCTION and ev.config == config for ev in history
    ):
        out.append(_v(
            "P5-Termination", "returned configuration was never introduced",
            epoch=config.epoch,
        ))

    joined = {
        ev.proc for ev in history
        if ev.kind == CONF_CHANGED and ev.config.epoch == config.epoch
    }
    for p in config.sorted_members():
        if p not in joined:
            out.append(_v(
                "P5a", f"member p{p} never joined epoch {config.epoch}",
                proc=p, epoch=config.epoch,
            ))

    delivered_by: dict[int, set[tuple]] = {}
    for ev in history:
        if ev.kind == DELIVER:
            delivered_by.setdefault(ev.proc, set()).add(ev.msg.ident)

    epochs = epochs_by_index(history)
    for ev in history:
        if ev.kind != BROADCAST or ev.proc not in config.members:
            continue
        if epochs[ev.idx - 1] != config.epoch:
            continue
        for p in config.sorted_members():
            if ev.msg.ident not in delivered_by.get(p, ()):
                out.append(_v(
                    "P5b",
                    f"{ev.msg.ident} broadcast in epoch {config.epoch} "
                    f"not delivered by member p{p}",
                    ident=ev.msg.ident, proc=p,
                ))

    all_delivered = set().union(*delivered_by.values()) if delivered_by else set()
    for ident in sorted(all_delivered):
        for p in config.sorted_members():
            if ident not in delivered_by.get(p, ()):
                out.append(_v(
                    "P5c",
                    f"{ident} delivered somewhere but not by member p{p}",
                    ident=ident, proc=p,
                ))
    return out


# -- primary order --------------------------------------------------------------------


def check_primary_order(history, mode: Mode) -> list[Violation]:
    out: list[Violation] = []
    epochs = epochs_by_index(history)
    broadcast_events: list[tuple[int, int, tuple, Optional[int]]] = []
    broadcast_epoch: dict[tuple, Optional[int]] = {}
    broadcast_idx: dict[tuple, int] = {}
    for ev in history:
        if ev.kind == BROADCAST:
            e = epochs[ev.idx - 1]
            broadcast_events.append((ev.idx, ev.proc, ev.msg.ident, e))
            broadcast_epoch.setdefault(ev.msg.ident, e)
            broadcast_idx.setdefault(ev.msg.ident, ev.idx)

    deliver_idx: dict[tuple[int, tuple], int] = {}
    seqs = _delivery_seqs(history)
    for proc, seq in seqs.items():
        for idx, ident in seq:
            deliver_idx.setdefault((proc, ident), idx)

    # Local Order: same broadcaster, same epoch, broadcast order k < l
    by_proc: dict[int, list[tuple[int, tuple, Optional[int]]]] = {}
    for idx, proc, ident, e in broadcast_events:
        by_proc.setdefault(proc, []).append((idx, ident, e))
    for proc, events in sorted(by_proc.items()):
        for a in range(len(events)):
            for b in range(a + 1, len(events)):
                _, m1, e1 = events[a]
                _, m2, e2 = events[b]
                if e1 is None or e1 != e2:
                    continue
                for j in sorted(seqs):
                    l2 = deliver_idx.get((j, m2))
                    if l2 is None:
                        continue
                    l1 = deliver_idx.get((j, m1))
                    if l1 is None or l1 >= l2:
                        out.append(_v(
                            "P6-LocalOrder",
                            f"p{j} delivered {m2} without first delivering {m1}, "
                            f"both broadcast by p{proc} in epoch {e1}",
                            proc=j, m1=m1, m2=m2,
                        ))

    # Global Order: per-process delivery epochs never decrease
    for proc in sorted(seqs):
        prev_epoch = None
        prev_ident = None
        for _, ident in seqs[proc]:
            e = broadcast_epoch.get(ident)
            if e is None:
                continue
            if prev_epoch is not None and e < prev_epoch:
                out.append(_v(
                    "P7-GlobalOrder",
                    f"p{proc} delivered {prev_ident} (epoch {prev_epoch}) "
                    f"before {ident} (epoch {e})",
                    proc=proc, m1=ident, m2=prev_ident,
                ))
            prev_epoch, prev_ident = e, ident

    if mode is Mode.PO:
        delivered_anywhere: dict[tuple, Optional[int]] = {}
        for (proc, ident) in deliver_idx:
            delivered_anywhere.setdefault(ident, broadcast_epoch.get(ident))
        for ev in history:
            if ev.kind != CONF_CHANGED:
                continue
            e_new = ev.config.epoch
            for ident, e in sorted(delivered_anywhere.items()):
                if e is None or e >= e_new:
                    continue
                k = deliver_idx.get((ev.proc, ident))
                if k is None or k >= ev.idx:
                    out.append(_v(
                        "P8-PrimaryIntegrity",
                        f"p{ev.proc} joined epoch {e_new} without delivering "
                        f"{ident} (epoch {e}, delivered elsewhere)",
                        proc=ev.proc, epoch=e_new, ident=ident,
                    ))
    return out


# -- speculative delivery -------------------------------------------------------------


def check_speculative(history) -> list[Violation]:
    out: list[Violation] = []
    epochs = epochs_by_index(history)
    broadcast_idx: dict[tuple, int] = {}
    broadcast_proc: dict[tuple, int] = {}
    for ev in history:
        if ev.kind == BROADCAST:
            broadcast_idx.setdefault(ev.msg.ident, ev.idx)
            broadcast_proc.setdefault(ev.msg.ident, ev.proc)
    broadcast_epoch = {
        ident: epochs[idx - 1] for ident, idx in broadcast_idx.items()
    }
    deliver_idx: dict[tuple[int, tuple], int] = {}
    for ev in history:
        if ev.kind == DELIVER:
            deliver_idx.setdefault((ev.proc, ev.msg.ident), ev.idx)

    conf_events = [ev for ev in history if ev.kind == CONF_CHANGED]

    for ev in conf_events:
        if ev.spec is None:
            continue
        if ev.proc != ev.config.leader:
            out.append(_v(
                "P9-SpecDelivery",
                f"speculative sequence at non-leader p{ev.proc}",
                idx=ev.idx,
            ))
        idents = [m.ident for m in ev.spec]
        if len(set(idents)) != len(idents):
            out.append(_v(
                "P9-SpecDelivery", "duplicate speculative delivery",
                idx=ev.idx, idents=idents,
            ))
        for m in ev.spec:
            b = broadcast_idx.get(m.ident)
            if b is None or b >= ev.idx:
                out.append(_v(
                    "P9-SpecDelivery",
                    f"speculatively delivered {m.ident} was not previously broadcast",
                    idx=ev.idx, ident=m.ident,
                ))
            d = deliver_idx.get((ev.proc, m.ident))
            if d is not None and d < ev.idx:
                out.append(_v(
                    "P9-SpecDelivery",
                    f"p{ev.proc} speculatively delivered {m.ident} after delivering it",
                    idx=ev.idx, ident=m.ident,
                ))

    # joining conf_changed per (proc, epoch) for the prefix-consistency checks
    join_of: dict[tuple[int, int], HistEvent] = {}
    for ev in conf_events:
        join_of.setdefault((ev.proc, ev.config.epoch), ev)

    all_idents = sorted(broadcast_idx)

    # part (a): m2 delivered by i and broadcast by j in epoch e'
    for m2 in all_idents:
        j = broadcast_proc[m2]
        e2 = broadcast_epoch[m2]
        if e2 is None:
            continue
        join = join_of.get((j, e2))
        if join is None or join.config.leader != j:
            continue
        sigma = [m.ident for m in join.spec] if join.spec is not None else []
        deliverers = [p for (p, ident) in deliver_idx if ident == m2]
        for i in sorted(deliverers):
            k = deliver_idx[(i, m2)]
            for m1 in all_idents:
                if m1 == m2 or broadcast_epoch.get(m1) == e2:
                    continue
                lhs_idx = deliver_idx.get((i, m1))
                lhs = lhs_idx is not None and lhs_idx < k
                dj = deliver_idx.get((j, m1))
                rhs = (dj is not None and dj < join.idx) or (m1 in sigma)
                if lhs != rhs:
                    out.append(_v(
                        "P10a",
                        f"delivery of {m1} before {m2} at p{i} is {lhs} but the "
                        f"broadcaster p{j}'s prior (speculative) delivery is {rhs}",
                        i=i, j=j, m1=m1, m2=m2,
                    ))

    # part (b): m2 speculatively delivered by j when joining e'
    for join in conf_events:
        if not join.spec:
            continue
        sigma = [m.ident for m in join.spec]
        j = join.proc
        for m2 in sigma:
            e2 = broadcast_epoch.get(m2)
            deliverers = [p for (p, ident) in deliver_idx if ident == m2]
            for i in sorted(deliverers):
                k = deliver_idx[(i, m2)]
                for m1 in all_idents:
                    if m1 == m2 or broadcast_epoch.get(m1) == e2:
                        continue
                    lhs_idx = deliver_idx.get((i, m1))
                    lhs = lhs_idx is not None and lhs_idx < k
                    dj = deliver_idx.get((j, m1))
                    in_order = (
                        m1 in sigma and sigma.index(m1) < sigma.index(m2)
                    )
                    rhs = (dj is not None and dj < join.idx) or in_order
                    if lhs != rhs:
                        out.append(_v(
                            "P10b",
                            f"order of {m1} vs speculative {m2} disagrees between "
                            f"p{i} and p{j}",
                            i=i, j=j, m1=m1, m2=m2,
                        ))
    return out


# -- brute-force safety oracle --------------------------------------------------------


def brute_force_safety(history) -> dict[str, bool]:
    """Direct quantifier enumeration of Integrity, Total Order and Agreement.
    Only practical for small histories; used to cross-check check_safety."""
    delivers = [
        (ev.idx, ev.proc, ev.msg.ident) for ev in history if ev.kind == DELIVER
    ]
    broadcasts = [(ev.idx, ev.msg.ident) for ev in history if ev.kind == BROADCAST]

    integrity = True
    for k, i, m in delivers:
        for l, i2, m2 in delivers:
            if i2 == i and m2 == m and l != k:
                integrity = False
        if not any(j < k and bm == m for j, bm in broadcasts):
            integrity = False

    total = True
    for k, i, m1 in delivers:
        for l, i2, m2 in delivers:
            if i2 != i or not k < l:
                continue
            for lp, j, m2b in delivers:
                if m2b != m2:
                    continue
                if not any(
                    kp < lp and jb == j and mb == m1 for kp, jb, mb in delivers
                ):
                    total = False

    agreement = True
    for _, i, m1 in delivers:
        for _, j, m2 in delivers:
            has_i_m2 = any(p == i and m == m2 for _, p, m in delivers)
            has_j_m1 = any(p == j and m == m1 for _, p, m in delivers)
            if not (has_i_m2 or has_j_m1):
                agreement = False

    return {"P2": integrity, "P3": total, "P4": agreement}


def safety_flags(violations: list[Violation]) -> dict[str, bool]:
    """Collapse check_safety output to the per-property booleans used for the
    brute-force comparison."""
    props = {v.prop for v in violations}
    return {
        "P2": not any(p.startswith("P2") for p in props),
        "P3": not any(p.startswith("P3") for p in props),
        "P4": not any(p.startswith("P4") for p in props),
    }


# -- linearizability ------------------------------------------------------------------


def check_linearizable(ops, machine, max_ops: int = 12):
    """Exhaustive search for a sequential witness consistent with real-time
    order, pruned by simulating the sequential specification.

    Operations without a response are excluded: every replica that applies an
    update answers its origin, so an unanswered operation's update was never
    applied at any replica by the end of a quiescent run.

    Returns ("ok", witness) / ("violation", None) / ("not-evaluated", None).
    """
    completed = [op for op in ops if op.completed]
    if len(completed) > max_ops:
        return ("not-evaluated", None)
    if not completed:
        return ("ok", [])
    completed = sorted(completed, key=lambda op: (op.invoked_at, op.completed_at))

    n = len(completed)
    visited: set[tuple[frozenset, object]] = set()

    def minimal(remaining: frozenset) -> list[int]:
        picks = []
        for x in sorted(remaining):
            if all(
                completed[y].completed_at >= completed[x].invoked_at
                for y in remaining
                if y != x
            ):
                picks.append(x)
        return picks

    def dfs(remaining: frozenset, state, witness):
        if not remaining:
            return witness
        key = (remaining, state)
        if key in visited:
            return None
        visited.add(key)
        for x in minimal(remaining):
            op = completed[x]
            nxt = machine.result_valid(state, op.command, op.result)
            if nxt is None:
                continue
            found = dfs(remaining - {x}, nxt, witness + [op.cmd_id])
            if found is not None:
                return found
        return None

    witness = dfs(frozenset(range(n)), machine.initial(), [])
    return ("ok", witness) if witness is not None else ("violation", None)
