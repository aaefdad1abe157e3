"""Client and replica state machines for the edge-timestamp protocol.

Each replica ``i`` keeps counters over ``E_i``; each client keeps counters over
``C_p``.  States are mutable objects owned by one executor; every handler
returns what it emitted so a host (the simulator, a test) can route it.
``copy.deepcopy`` gives an independent snapshot when a pure step is needed.

Readiness of a logged record or a waiting query is decided by two tests:

* counters on ``i``'s incoming edges: the record's dependency must be covered
  by what ``i`` has actually received (``recv``), a query's by what ``i`` has
  applied (``val``);
* no unapplied record in ``i``'s log may precede it, where ``a`` precedes a
  dependency vector ``d`` if some edge that ``a`` advanced is in ``d``'s
  domain with ``a.ts[e] <= d[e]``.

``literal=True`` instead follows the published pseudocode word for word:
``comp`` is checked against ``rep``, the waiting tests only look at incoming
edges and gossip resends the whole shared log.  That variant is kept for comparison; it can apply writes
early (see ``tests/test_protocol.py``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .graph import Topology
from .timestamp import ClockDomainError, EdgeClock, leq_on, merge, restrict, zero_clock

UNSET = None

SKIP_QUERY_WAIT = "skip-query-wait"
SKIP_UPDATE_CHECK = "skip-update-check"
IGNORE_COMP_DEPS = "ignore-comp-deps"
FAULTS = frozenset({SKIP_QUERY_WAIT, SKIP_UPDATE_CHECK, IGNORE_COMP_DEPS})


class ProtocolError(RuntimeError):
    """A message or call violated the protocol contract."""


def render_key(key) -> str:
    return f"{key[0]}#{key[1]}"


def parse_key(text: str):
    origin, _, seq = text.rpartition("#")
    return (origin, int(seq))


@dataclass(frozen=True)
class UpdateRecord:
    origin: str
    seq: int
    var: str
    value: Any
    ts: EdgeClock
    dep: EdgeClock

    @property
    def key(self):
        return (self.origin, self.seq)


@dataclass(frozen=True)
class Update:
    x: str
    v: Any
    dep: EdgeClock
    client: str = ""
    entry: str = ""


@dataclass(frozen=True)
class Query:
    x: str
    dep: EdgeClock
    client: str = ""
    entry: str = ""


@dataclass(frozen=True)
class UpdateReply:
    ts: EdgeClock
    key: tuple
    client: str = ""
    entry: str = ""


@dataclass(frozen=True)
class QueryReply:
    value: Any
    val: EdgeClock
    read: tuple | None
    x: str = ""
    client: str = ""
    entry: str = ""

    @property
    def ts(self):
        return self.val


@dataclass(frozen=True)
class Gossip:
    sender: str
    ts: EdgeClock
    records: tuple


@dataclass
class UpdateResult:
    reply: UpdateReply
    record: UpdateRecord
    applied: list
    unblocked: list


@dataclass
class QueryResult:
    reply: QueryReply | None
    blocked: bool


@dataclass
class GossipResult:
    received: list
    applied: list
    unblocked: list


class Client:
    """A strictly sequential client: at most one request in flight."""

    def __init__(self, cid: str, replicas, clock_domain, target_domain, stores):
        self.id = cid
        self.replicas = frozenset(replicas)
        self.c = zero_clock(clock_domain)
        self._target_domain = target_domain
        self._stores = stores
        self.outstanding: str | None = None

    @classmethod
    def for_topology(cls, cid: str, topo: Topology) -> "Client":
        return cls(cid, topo.access[cid], topo.C(cid), topo.E, lambda r, x: x in topo.share.variables[r])

    def _check(self, target, x):
        if self.outstanding is not None:
            raise ProtocolError(f"client {self.id} already has a {self.outstanding} in flight")
        if target not in self.replicas:
            raise ProtocolError(f"client {self.id} may not contact {target}")
        if not self._stores(target, x):
            raise ProtocolError(f"replica {target} does not store {x!r}")

    def update(self, target: str, x: str, v, entry: str = "") -> Update:
        self._check(target, x)
        self.outstanding = "update"
        return Update(x, v, restrict(self.c, self._target_domain(target)), self.id, entry)

    def query(self, target: str, x: str, entry: str = "") -> Query:
        self._check(target, x)
        self.outstanding = "query"
        return Query(x, restrict(self.c, self._target_domain(target)), self.id, entry)

    def on_reply(self, ts: EdgeClock) -> EdgeClock:
        if self.outstanding is None:
            raise ProtocolError(f"client {self.id} received an unsolicited reply")
        self.c = merge(self.c, ts)
        self.outstanding = None
        return self.c


@dataclass
class PendingQuery:
    query: Query
    replica: str


class Replica:
    def __init__(self, rid: str, topo: Topology, *, gc: bool = False, faults=(), literal: bool = False):
        faults = frozenset(faults)
        if faults - FAULTS:
            raise ValueError(f"unknown fault {sorted(faults - FAULTS)[0]!r}")
        self.id = rid
        self.topo = topo
        self.vars = topo.share.variables[rid]
        self.edges = topo.E(rid)
        self.incoming = tuple(sorted(topo.sets[rid].incoming))
        self.neighbors = topo.share.neighbors(rid)
        self.gc_enabled = gc
        self.faults = faults
        self.literal = literal

        self.rep = zero_clock(self.edges)
        self.val = zero_clock(self.edges)
        self.store = {x: UNSET for x in sorted(self.vars)}
        self.source = {x: None for x in sorted(self.vars)}
        self.log: dict[tuple, UpdateRecord] = {}
        self.done: dict[tuple, str] = {}
        self.pending: list[PendingQuery] = []
        self.seq = 0
        # contiguous prefix of indices actually received per incoming edge
        self.recv = {e: 0 for e in self.incoming}
        self._recv_extra = {e: set() for e in self.incoming}
        self.sent: dict[tuple, set] = {}
        self.echoes: dict[tuple, set] = {}

    # -- readiness -------------------------------------------------------

    def _advanced(self, r: UpdateRecord):
        return self.topo.out_edges(r.origin, r.var)

    def _precedes(self, a: UpdateRecord, dep: EdgeClock) -> bool:
        for e in self._advanced(a):
            if e in dep and a.ts[e] <= dep[e]:
                return True
        return False

    def _unapplied(self):
        return [r for k, r in sorted(self.log.items()) if k not in self.done]

    def _blocked_by_log(self, dep: EdgeClock, skip=None) -> bool:
        return any(r.key != skip and self._precedes(r, dep) for r in self._unapplied())

    def _incoming_in(self, dep: EdgeClock):
        return [e for e in self.incoming if e in dep]

    def _query_ready(self, q: Query) -> bool:
        if SKIP_QUERY_WAIT in self.faults:
            return True
        if not leq_on(q.dep, self.val, self.incoming):
            return False
        return self.literal or not self._blocked_by_log(q.dep)

    def _in_comp(self, r: UpdateRecord) -> bool:
        return all(r.dep[e] <= self.rep[e] for e in self._incoming_in(r.dep))

    def _literal_precedes(self, a: UpdateRecord, r: UpdateRecord) -> bool:
        common = [e for e in self._incoming_in(r.dep) if e in a.ts]
        return bool(common) and all(a.ts[e] <= r.dep[e] for e in common)

    def _next_ready(self):
        unapplied = self._unapplied()
        if IGNORE_COMP_DEPS in self.faults:
            return unapplied[0] if unapplied else None
        if self.literal:
            comp = [r for r in unapplied if self._in_comp(r)]
            for r in comp:
                if not any(o is not r and self._literal_precedes(o, r) for o in comp):
                    return r
            return comp[0] if comp else None
        for r in unapplied:
            dep = self._effective_dep(r)
            if self._in_comp_dep(dep) and not any(o is not r and self._precedes(o, dep) for o in unapplied):
                return r
        return None

    def _effective_dep(self, r: UpdateRecord) -> EdgeClock:
        # counters are cumulative, so an origin's records must apply here in index order
        e = (r.origin, self.id)
        if r.origin == self.id or e not in r.ts or r.ts[e] == 0:
            return r.dep
        return r.dep.replace({e: max(r.dep[e], r.ts[e] - 1)})

    def _in_comp_dep(self, dep: EdgeClock) -> bool:
        return all(dep[e] <= self.recv[e] for e in self._incoming_in(dep))

    # -- state changes ---------------------------------------------------

    def _apply(self, r: UpdateRecord):
        self.store[r.var] = r.value
        self.source[r.var] = r.key
        self.val = merge(self.val, r.ts)
        self.done[r.key] = r.var

    def apply_ready(self) -> list[UpdateRecord]:
        """Apply logged records whose dependencies are met, in dependency order."""
        applied = []
        while (r := self._next_ready()) is not None:
            self._apply(r)
            applied.append(r)
        return applied

    def wake(self) -> list[tuple[PendingQuery, QueryReply]]:
        out, still = [], []
        for p in self.pending:
            if self._query_ready(p.query):
                out.append((p, self._reply(p.query)))
            else:
                still.append(p)
        self.pending = still
        return out

    def _reply(self, q: Query) -> QueryReply:
        return QueryReply(self.store[q.x], self.val, self.source[q.x], q.x, q.client, q.entry)

    def _check_dep(self, x, dep):
        if x not in self.vars:
            raise ProtocolError(f"replica {self.id} does not store {x!r}")
        if dep.domain != self.edges:
            raise ClockDomainError(f"dependency domain does not match E_{self.id}")

    def on_update(self, u: Update) -> UpdateResult:
        self._check_dep(u.x, u.dep)
        mine = self.topo.out_edges(self.id, u.x)
        self.rep = self.rep.replace({e: self.rep[e] + 1 for e in mine})
        ts = u.dep.replace({e: self.rep[e] for e in mine})
        self.seq += 1
        r = UpdateRecord(self.id, self.seq, u.x, u.v, ts, u.dep)
        self.log[r.key] = r
        if SKIP_UPDATE_CHECK in self.faults:
            ok = True
        else:
            ok = leq_on(u.dep, self.val, self.incoming)
            ok = ok and (self.literal or not self._blocked_by_log(u.dep, skip=r.key))
        applied = []
        if ok:
            self._apply(r)
            applied.append(r)
        applied += self.apply_ready()
        return UpdateResult(UpdateReply(ts, r.key, u.client, u.entry), r, applied, self.wake())

    def on_query(self, q: Query) -> QueryResult:
        self._check_dep(q.x, q.dep)
        if self._query_ready(q):
            return QueryResult(self._reply(q), False)
        self.pending.append(PendingQuery(q, self.id))
        return QueryResult(None, True)

    def gossip_to(self, j: str) -> Gossip:
        if j not in self.neighbors:
            raise ProtocolError(f"{j} is not a share-graph neighbour of {self.id}")
        shared = self.topo.share.shared_vars(self.id, j)
        # each record goes to each neighbour once; reliable channels make resending pointless
        records = tuple(
            r for k, r in sorted(self.log.items())
            if r.var in shared and (self.literal or j not in self.sent.get(k, ()))
        )
        for r in records:
            self.sent.setdefault(r.key, set()).add(j)
        return Gossip(self.id, self.rep, records)

    def _seen(self, r: UpdateRecord) -> bool:
        if r.origin == self.id or r.key in self.log or r.key in self.done:
            return True
        e = (r.origin, self.id)
        idx = r.ts[e]
        return idx <= self.recv[e] or idx in self._recv_extra[e]

    def _receive(self, r: UpdateRecord):
        self.log[r.key] = r
        e = (r.origin, self.id)
        extra = self._recv_extra[e]
        extra.add(r.ts[e])
        while self.recv[e] + 1 in extra:
            self.recv[e] += 1
            extra.discard(self.recv[e])

    def on_gossip(self, m: Gossip) -> GossipResult:
        if m.sender not in self.neighbors:
            raise ProtocolError(f"gossip from non-neighbour {m.sender}")
        received = []
        for r in m.records:
            if r.var not in self.vars:
                raise ProtocolError(f"gossip carried {r.var!r}, not stored at {self.id}")
            self.echoes.setdefault(r.key, set()).add(m.sender)
            if not self._seen(r):
                self._receive(r)
                received.append(r)
        self.rep = merge(self.rep, m.ts)
        applied = self.apply_ready()
        return GossipResult(received, applied, self.wake())

    # -- garbage collection ----------------------------------------------

    def _sharing(self, x: str):
        return [j for j in self.neighbors if x in self.topo.share.shared_vars(self.id, j)]

    def gc(self) -> tuple[list, list]:
        """Drop log records and Done entries that can no longer matter.

        A record leaves the log once applied here and gossiped at least once
        to every neighbour sharing its variable.  A Done entry goes once the
        record has left the log and every such neighbour has delivered it.
        Duplicates arriving later are still recognised through ``recv``.
        """
        if not self.gc_enabled:
            raise ProtocolError("garbage collection requires the failure-free configuration")
        dropped_log = []
        for k, r in list(self.log.items()):
            if k in self.done and all(j in self.sent.get(k, ()) for j in self._sharing(r.var)):
                del self.log[k]
                self.sent.pop(k, None)
                dropped_log.append(k)
        dropped_done = []
        for k, x in list(self.done.items()):
            if k in self.log:
                continue
            if all(j in self.echoes.get(k, ()) for j in self._sharing(x)):
                del self.done[k]
                self.echoes.pop(k, None)
                dropped_done.append(k)
        return dropped_log, dropped_done


def make_clients(topo: Topology) -> dict[str, Client]:
    return {c: Client.for_topology(c, topo) for c in topo.clients}


def make_replicas(topo: Topology, **kw) -> dict[str, Replica]:
    return {r: Replica(r, topo, **kw) for r in topo.replicas}
