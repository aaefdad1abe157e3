"""Replica-indexed (Lazy-Replication style) baseline for partial replication.

Every clock has one counter per replica.  Record metadata travels to every
replica so counters can advance; values only travel to replicas that store
the variable.  Applying a record for a variable not stored locally just
advances ``val``.  ``rep[k]`` is the contiguous prefix of ``k``'s records
actually held, so a relay can never vouch for records it did not forward.
"""
from __future__ import annotations

import dataclasses

from .graph import Topology
from .protocol import (
    Client,
    Gossip,
    GossipResult,
    PendingQuery,
    ProtocolError,
    Query,
    QueryReply,
    QueryResult,
    Update,
    UpdateRecord,
    UpdateReply,
    UpdateResult,
    UNSET,
)
from .timestamp import ClockDomainError, EdgeClock, leq_on, merge, zero_clock


def baseline_client(cid: str, topo: Topology) -> Client:
    everyone = topo.replicas
    return Client(cid, topo.access[cid], everyone, lambda r: everyone, lambda r, x: x in topo.share.variables[r])


class BaselineReplica:
    def __init__(self, rid: str, topo: Topology):
        self.id = rid
        self.topo = topo
        self.vars = topo.share.variables[rid]
        self.peers = [r for r in topo.replicas if r != rid]
        self.rep = zero_clock(topo.replicas)
        self.val = zero_clock(topo.replicas)
        self.store = {x: UNSET for x in sorted(self.vars)}
        self.source = {x: None for x in sorted(self.vars)}
        self.log: dict[tuple, UpdateRecord] = {}
        self.done: set = set()
        self.pending: list[PendingQuery] = []
        self._held = {r: set() for r in topo.replicas}
        self.sent: dict[tuple, set] = {}

    @property
    def edges(self):
        return self.rep.domain

    def _apply(self, r: UpdateRecord) -> bool:
        self.val = merge(self.val, r.ts)
        self.done.add(r.key)
        if r.var in self.vars:
            self.store[r.var] = r.value
            self.source[r.var] = r.key
            return True
        return False

    def apply_ready(self) -> list[UpdateRecord]:
        """Apply held records whose dependencies, including the origin's earlier records, are applied."""
        applied = []
        while True:
            pick = None
            for k, r in sorted(self.log.items()):
                if k in self.done:
                    continue
                dep = r.dep.replace({r.origin: max(r.dep[r.origin], r.seq - 1)})
                if leq_on(dep, self.val, dep):
                    pick = r
                    break
            if pick is None:
                return applied
            if self._apply(pick):
                applied.append(pick)

    def _ready(self, dep: EdgeClock) -> bool:
        return leq_on(dep, self.val, dep)

    def wake(self):
        out, still = [], []
        for p in self.pending:
            if self._ready(p.query.dep):
                out.append((p, self._reply(p.query)))
            else:
                still.append(p)
        self.pending = still
        return out

    def _reply(self, q: Query) -> QueryReply:
        return QueryReply(self.store[q.x], self.val, self.source[q.x], q.x, q.client, q.entry)

    def _check(self, x, dep):
        if x not in self.vars:
            raise ProtocolError(f"replica {self.id} does not store {x!r}")
        if dep.domain != self.rep.domain:
            raise ClockDomainError("baseline dependency must cover every replica")

    def on_update(self, u: Update) -> UpdateResult:
        self._check(u.x, u.dep)
        self.rep = self.rep.replace({self.id: self.rep[self.id] + 1})
        ts = u.dep.replace({self.id: self.rep[self.id]})
        r = UpdateRecord(self.id, self.rep[self.id], u.x, u.v, ts, u.dep)
        self.log[r.key] = r
        applied = self.apply_ready()
        return UpdateResult(UpdateReply(ts, r.key, u.client, u.entry), r, applied, self.wake())

    def on_query(self, q: Query) -> QueryResult:
        self._check(q.x, q.dep)
        if self._ready(q.dep):
            return QueryResult(self._reply(q), False)
        self.pending.append(PendingQuery(q, self.id))
        return QueryResult(None, True)

    def gossip_to(self, j: str) -> Gossip:
        if j not in self.peers:
            raise ProtocolError(f"unknown peer {j}")
        shared = self.topo.share.shared_vars(self.id, j)
        records = tuple(
            r if r.var in shared else dataclasses.replace(r, value=None)
            for k, r in sorted(self.log.items())
            if j not in self.sent.get(k, ())
        )
        for r in records:
            self.sent.setdefault(r.key, set()).add(j)
        return Gossip(self.id, self.rep, records)

    def on_gossip(self, m: Gossip) -> GossipResult:
        received = []
        useful = self.topo.share.shared_vars(m.sender, self.id)
        for r in m.records:
            if r.key in self.log or (r.var in self.vars and r.var not in useful):
                continue
            self.log[r.key] = r
            received.append(r)
            held = self._held[r.origin]
            held.add(r.seq)
            n = self.rep[r.origin]
            while n + 1 in held:
                n += 1
            self.rep = self.rep.replace({r.origin: n})
        applied = self.apply_ready()
        return GossipResult(received, applied, self.wake())
