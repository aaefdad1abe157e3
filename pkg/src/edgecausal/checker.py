"""Post-hoc verification of a trace against the happened-before relation.

Operations are the client requests in the trace (one per ``ClientSend``).
Happened-before is the transitive closure of program order (per client, in
send order) and read-from (a reply's ``read`` tag names the record it
returned).  The safety checks then ask, per replica, whether every write in
an operation's causal past on a locally stored variable was applied there
first.
"""
from __future__ import annotations

import graphlib
from dataclasses import dataclass, field

from .graph import normalize_assignment

EARLY_APPLY = "SafetyEarlyApply"
STALE_READ = "SafetyStaleRead"
UNAPPLIED = "LivenessUnapplied"
BLOCKED_FOREVER = "LivenessBlockedForever"


class CheckerError(ValueError):
    """The trace is not well formed enough to reconstruct causality."""


@dataclass(frozen=True)
class Operation:
    entry: str
    client: str
    op: str
    replica: str
    var: str
    step: int
    key: str | None = None  # record key, for updates


@dataclass
class CausalOrder:
    ops: dict  # entry -> Operation
    program: dict = field(default_factory=dict)  # entry -> program-order predecessor
    read_from: dict = field(default_factory=dict)  # query entry -> write entry
    ancestors: dict = field(default_factory=dict)  # entry -> frozenset of entries
    by_key: dict = field(default_factory=dict)  # record key -> write entry

    def before(self, a: str, b: str) -> bool:
        return a in self.ancestors[b]

    def past_writes(self, entry: str):
        return [self.ops[a] for a in sorted(self.ancestors[entry]) if self.ops[a].op == "update"]


@dataclass(frozen=True)
class Violation:
    kind: str
    steps: tuple
    witness: str

    def render(self) -> str:
        return f"{self.kind} steps={','.join(map(str, self.steps))} {self.witness}"


def build_causal_order(trace) -> CausalOrder:
    ops = {}
    last = {}
    program = {}
    for ev in trace:
        if ev.kind != "ClientSend":
            continue
        e = ev["entry"]
        if e in ops:
            raise CheckerError(f"entry {e!r} sent twice (step {ev.step})")
        ops[e] = Operation(e, ev["client"], ev["op"], ev["replica"], ev["var"], ev.step)
        if ev["client"] in last:
            program[e] = last[ev["client"]]
        last[ev["client"]] = e

    by_key = {}
    for ev in trace:
        if ev.kind == "ReplicaRecvUpdate":
            e = ev["entry"]
            if e not in ops:
                raise CheckerError(f"update {e!r} at step {ev.step} was never sent")
            by_key[ev["key"]] = e
            o = ops[e]
            ops[e] = Operation(o.entry, o.client, o.op, o.replica, o.var, o.step, ev["key"])

    read_from = {}
    for ev in trace:
        if ev.kind == "QueryReply" and ev["read"] is not None:
            if ev["read"] not in by_key:
                raise CheckerError(f"reply at step {ev.step} reads unknown record {ev['read']}")
            read_from[ev["entry"]] = by_key[ev["read"]]

    preds = {e: set() for e in ops}
    for e, p in program.items():
        preds[e].add(p)
    for q, w in read_from.items():
        preds[q].add(w)
    try:
        order = list(graphlib.TopologicalSorter(preds).static_order())
    except graphlib.CycleError as exc:
        raise CheckerError(f"happened-before has a cycle: {exc.args[1]}") from None
    ancestors = {}
    for e in order:
        acc = set()
        for p in preds[e]:
            acc.add(p)
            acc |= ancestors[p]
        ancestors[e] = frozenset(acc)
    return CausalOrder(ops, program, read_from, ancestors, by_key)


def _applied_so_far(trace):
    """Yield ``(event, applied)`` where ``applied[r]`` is the set of keys applied at ``r`` before the event."""
    applied = {}
    for ev in trace:
        yield ev, applied
        if ev.kind == "ApplyWrite":
            applied.setdefault(ev["replica"], set()).add(ev["key"])


def _missing(order: CausalOrder, entry: str, replica: str, stores, applied):
    have = applied.get(replica, set())
    return [
        w for w in order.past_writes(entry)
        if w.var in stores.get(replica, ()) and w.key is not None and w.key not in have
    ]


def check_safety(trace, order: CausalOrder, assign) -> list[Violation]:
    stores = normalize_assignment(assign)
    out = []
    latest = {}  # (replica, var) -> (key, step)
    for ev, applied in _applied_so_far(trace):
        if ev.kind == "ApplyWrite":
            i, k = ev["replica"], ev["key"]
            w = order.by_key.get(k)
            if w is None:
                raise CheckerError(f"step {ev.step} applies unknown record {k}")
            for m in _missing(order, w, i, stores, applied):
                out.append(Violation(EARLY_APPLY, (ev.step,), f"{k} applied at {i} before {m.key} ({m.entry} on {m.var})"))
            latest[(i, ev["var"])] = (k, ev.step)
        elif ev.kind == "QueryReply":
            i, x, q = ev["replica"], ev["var"], ev["entry"]
            expect, at = latest.get((i, x), (None, None))
            if ev["read"] != expect:
                steps = (ev.step,) if at is None else (at, ev.step)
                out.append(Violation(STALE_READ, steps, f"{q} at {i} read {ev['read']} but the last write of {x} applied there is {expect}"))
            for m in _missing(order, q, i, stores, applied):
                out.append(Violation(STALE_READ, (ev.step,), f"{q} answered at {i} before {m.key} ({m.entry} on {m.var}) was applied"))
    return out


def check_liveness(trace, assign) -> list[Violation]:
    """Every write reaches every holder; every blocked query is released."""
    stores = normalize_assignment(assign)
    applied = {}
    writes = []
    blocked = {}
    for ev in trace:
        if ev.kind == "ReplicaRecvUpdate":
            writes.append(ev)
        elif ev.kind == "ApplyWrite":
            applied.setdefault(ev["key"], set()).add(ev["replica"])
        elif ev.kind == "QueryBlocked":
            blocked[ev["entry"]] = ev
        elif ev.kind == "QueryUnblocked":
            blocked.pop(ev["entry"], None)
    out = []
    for ev in writes:
        for r in sorted(r for r, xs in stores.items() if ev["var"] in xs):
            if r not in applied.get(ev["key"], ()):
                out.append(Violation(UNAPPLIED, (ev.step,), f"{ev['key']} ({ev['var']}) never applied at {r}"))
    for e, ev in blocked.items():
        out.append(Violation(BLOCKED_FOREVER, (ev.step,), f"query {e} at {ev['replica']} never unblocked"))
    return out


def classify_stalls(trace, order: CausalOrder, assign) -> tuple[list, list]:
    """Split ``QueryBlocked`` events into true and false stalls, judged at block time."""
    stores = normalize_assignment(assign)
    true_stalls, false_stalls = [], []
    for ev, applied in _applied_so_far(trace):
        if ev.kind != "QueryBlocked":
            continue
        if _missing(order, ev["entry"], ev["replica"], stores, applied):
            true_stalls.append(ev)
        else:
            false_stalls.append(ev)
    return true_stalls, false_stalls


def check_all(trace, assign) -> list[Violation]:
    order = build_causal_order(trace)
    return check_safety(trace, order, assign) + check_liveness(trace, assign)
