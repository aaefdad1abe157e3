"""Deterministic discrete-event simulation of clients, replicas and channels.

Time is an integer tick count.  Every message gets ``deliver = send + delay``
where the delay for the n-th message on channel ``src->dst`` is drawn from the
channel's ``[min, max]`` bounds by hashing ``(seed, src, dst, n)`` with
BLAKE2b (see :func:`channel_delay`).  Draws therefore depend only on the
channel and its message ordinal, so two protocol modes that put the same
messages on a channel see the same delays.  Deliveries are ordered by
``(deliver time, send step, message id)``; a later message can overtake an
earlier one on the same channel, but nothing is lost.
"""
from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, field

from .baseline import BaselineReplica, baseline_client
from .protocol import Client, Gossip, Query, QueryReply, Replica, render_key
from .reduction import reduction_for
from .scenario import NetworkModel, Scenario, ScriptEntry
from .trace import TraceEvent

DELAY_ALGORITHM = "blake2b-64/uniform-mod v1"


def channel_delay(seed: int, src: str, dst: str, n: int, lo: int, hi: int) -> int:
    digest = hashlib.blake2b(f"{seed}|{src}|{dst}|{n}".encode(), digest_size=8).digest()
    return lo + int.from_bytes(digest, "big") % (hi - lo + 1)


@dataclass
class Metrics:
    mode: str
    seed: int
    steps: int = 0
    end_time: int = 0
    quiescent: bool = False
    edges: dict = field(default_factory=dict)
    reduced: dict = field(default_factory=dict)
    client_edges: dict = field(default_factory=dict)
    stalls: int = 0
    stall_time: int = 0
    messages: dict = field(default_factory=dict)
    max_log: dict = field(default_factory=dict)
    max_done: dict = field(default_factory=dict)

    def report(self) -> str:
        lines = [
            f"delay_algorithm = {DELAY_ALGORITHM}",
            f"mode = {self.mode}",
            f"seed = {self.seed}",
            f"steps = {self.steps}",
            f"end_time = {self.end_time}",
            f"quiescent = {str(self.quiescent).lower()}",
            f"stalls = {self.stalls}",
            f"stall_time = {self.stall_time}",
        ]
        lines += [f"messages.{k} = {v}" for k, v in sorted(self.messages.items())]
        lines += [f"client.{c}.C = {n}" for c, n in sorted(self.client_edges.items())]
        lines.append("")
        lines.append(f"{'replica':<10}{'|E|':>6}{'|red|':>7}{'maxlog':>8}{'maxdone':>9}")
        for r in sorted(self.edges):
            lines.append(f"{r:<10}{self.edges[r]:>6}{self.reduced[r]:>7}{self.max_log.get(r, 0):>8}{self.max_done.get(r, 0):>9}")
        return "\n".join(lines) + "\n"


@dataclass
class RunResult:
    trace: list
    metrics: Metrics
    replicas: dict
    clients: dict

    def __iter__(self):
        return iter((self.trace, self.metrics))


@dataclass
class _Msg:
    kind: str  # update | query | reply | gossip
    src: str
    dst: str
    payload: object
    id: int


class Simulation:
    """One run of a scenario.  Use :func:`run` or :func:`run_baseline`."""

    def __init__(
        self,
        sc: Scenario,
        seed: int | None = None,
        *,
        mode: str | None = None,
        gc: bool = False,
        faults=(),
        literal: bool = False,
        step_cap: int | None = None,
        observer=None,
        redeliver: bool = False,
    ):
        self.sc = sc
        self.seed = sc.network.seed if seed is None else seed
        self.mode = mode or sc.mode
        if self.mode not in ("edge", "baseline"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.step_cap = step_cap or sc.step_cap
        self.observer = observer
        self.redeliver = redeliver
        topo = self.topo = sc.topology
        if self.mode == "edge":
            self.replicas = {r: Replica(r, topo, gc=gc, faults=faults, literal=literal) for r in topo.replicas}
            self.clients = {c: Client.for_topology(c, topo) for c in topo.clients}
            self.peers = {r: list(topo.share.neighbors(r)) for r in topo.replicas}
        else:
            if gc or faults or literal:
                raise ValueError("gc, faults and literal apply to the edge protocol only")
            self.replicas = {r: BaselineReplica(r, topo) for r in topo.replicas}
            self.clients = {c: baseline_client(c, topo) for c in topo.clients}
            self.peers = {r: self.replicas[r].peers for r in topo.replicas}
        self.gc = gc

        self.trace: list[TraceEvent] = []
        self.time = 0
        self._heap = []
        self._msg_ids = 0
        # tie-break clock: counts emitted events except GC bookkeeping, so GC cannot reorder deliveries
        self._sched_step = 0
        self._channel_n: dict = {}
        self.messages: dict = {}

        self._queue = {c: [e for e in sc.script if e.client == c] for c in topo.clients}
        self._completed: set = set()
        self._keys: dict = {}  # entry id -> record key
        self._applied: dict = {}  # record key -> replicas
        self._received: dict = {}  # record key -> replicas
        self._blocked_at: dict = {}  # entry id -> time
        self.stall_time = 0
        self.max_log = {r: 0 for r in topo.replicas}
        self.max_done = {r: 0 for r in topo.replicas}
        self.quiescent = False

    # -- plumbing ----------------------------------------------------------

    def _emit(self, kind, **data):
        ev = TraceEvent(len(self.trace), self.time, kind, data)
        self.trace.append(ev)
        if kind != "GCRun":
            self._sched_step += 1
        if self.observer is not None:
            self.observer(self, ev)
        return ev

    def _send(self, kind, src, dst, payload) -> int:
        mid = self._msg_ids
        self._msg_ids += 1
        n = self._channel_n.get((src, dst), 0)
        self._channel_n[(src, dst)] = n + 1
        lo, hi = self.sc.network.bounds(src, dst)
        at = self.time + channel_delay(self.seed, src, dst, n, lo, hi)
        heapq.heappush(self._heap, (at, self._sched_step, mid, _Msg(kind, src, dst, payload, mid)))
        self.messages[kind] = self.messages.get(kind, 0) + 1
        return mid

    def _track(self, rid):
        rep = self.replicas[rid]
        self.max_log[rid] = max(self.max_log[rid], len(rep.log))
        self.max_done[rid] = max(self.max_done[rid], len(rep.done))

    # -- clients -----------------------------------------------------------

    def _guards_met(self, e: ScriptEntry) -> bool:
        if any(a not in self._completed for a in e.after):
            return False
        for a, r in e.after_applied:
            k = self._keys.get(a)
            if k is None or r not in self._applied.get(k, ()):
                return False
        for a, r in e.after_received:
            k = self._keys.get(a)
            if k is None or r not in self._received.get(k, ()):
                return False
        return True

    def _issue_ready(self):
        for c in sorted(self._queue):
            q = self._queue[c]
            client = self.clients[c]
            if not q or client.outstanding is not None or not self._guards_met(q[0]):
                continue
            e = q.pop(0)
            if e.op == "update":
                msg = client.update(e.replica, e.var, e.value, e.id)
                mid = self._next_id()
                self._emit("ClientSend", msg=mid, client=c, entry=e.id, op="update", replica=e.replica,
                           var=e.var, value=e.value, dep=msg.dep.render())
            else:
                msg = client.query(e.replica, e.var, e.id)
                mid = self._next_id()
                self._emit("ClientSend", msg=mid, client=c, entry=e.id, op="query", replica=e.replica,
                           var=e.var, dep=msg.dep.render())
            self._send_with_id(e.op, c, e.replica, msg, mid)

    def _next_id(self):
        return self._msg_ids

    def _send_with_id(self, kind, src, dst, payload, mid):
        assert mid == self._msg_ids
        self._send(kind, src, dst, payload)

    # -- replica side --------------------------------------------------------

    def _applied_events(self, rid, records):
        for r in records:
            k = render_key(r.key)
            self._applied.setdefault(r.key, set()).add(rid)
            self._received.setdefault(r.key, set()).add(rid)
            self._emit("ApplyWrite", replica=rid, key=k, var=r.var, value=r.value, ts=r.ts.render())

    def _reply_query(self, rid, q: Query, reply: QueryReply):
        mid = self._next_id()
        self._emit("QueryReply", msg=mid, replica=rid, client=q.client, entry=q.entry, var=q.x,
                   value=reply.value, read=None if reply.read is None else render_key(reply.read),
                   ts=reply.val.render())
        self._send_with_id("reply", rid, q.client, reply, mid)

    def _unblocked_events(self, rid, pairs):
        for p, reply in pairs:
            q = p.query
            self.stall_time += self.time - self._blocked_at.pop(q.entry)
            self._emit("QueryUnblocked", replica=rid, client=q.client, entry=q.entry, var=q.x)
            self._reply_query(rid, q, reply)

    def _gossip_from(self, rid, targets):
        rep = self.replicas[rid]
        for j in targets:
            m = rep.gossip_to(j)
            mid = self._next_id()
            self._emit("GossipSend", msg=mid, src=rid, dst=j,
                       records=[render_key(r.key) for r in m.records], ts=m.ts.render())
            self._send_with_id("gossip", rid, j, m, mid)

    def _run_gc(self, rid):
        if not self.gc:
            return
        rep = self.replicas[rid]
        self._track(rid)
        dropped_log, dropped_done = rep.gc()
        if dropped_log or dropped_done:
            self._emit("GCRun", replica=rid, log=[render_key(k) for k in dropped_log],
                       done=[render_key(k) for k in dropped_done], log_size=len(rep.log), done_size=len(rep.done))

    def _on_update(self, m: _Msg):
        rid, u = m.dst, m.payload
        res = self.replicas[rid].on_update(u)
        key = res.record.key
        self._keys[u.entry] = key
        self._received.setdefault(key, set()).add(rid)
        reply_id = self._next_id()
        self._emit("ReplicaRecvUpdate", msg=m.id, reply=reply_id, replica=rid, client=u.client, entry=u.entry,
                   var=u.x, value=u.v, key=render_key(key), ts=res.reply.ts.render())
        self._send_with_id("reply", rid, u.client, res.reply, reply_id)
        self._applied_events(rid, res.applied)
        self._unblocked_events(rid, res.unblocked)
        if self.sc.policy == "after-update":
            self._gossip_from(rid, self.peers[rid])
        self._track(rid)
        self._run_gc(rid)

    def _on_query(self, m: _Msg):
        rid, q = m.dst, m.payload
        self._emit("ReplicaRecvQuery", msg=m.id, replica=rid, client=q.client, entry=q.entry, var=q.x,
                   dep=q.dep.render())
        res = self.replicas[rid].on_query(q)
        if res.blocked:
            self._blocked_at[q.entry] = self.time
            self._emit("QueryBlocked", replica=rid, client=q.client, entry=q.entry, var=q.x, dep=q.dep.render())
        else:
            self._reply_query(rid, q, res.reply)

    def _on_reply(self, m: _Msg):
        c = m.dst
        client = self.clients[c]
        op = client.outstanding
        clock = client.on_reply(m.payload.ts)
        entry = m.payload.entry
        self._completed.add(entry)
        self._emit("ClientRecvReply", msg=m.id, client=c, entry=entry, op=op, clock=clock.render())

    def _on_gossip(self, m: _Msg):
        rid = m.dst
        rep = self.replicas[rid]
        res = rep.on_gossip(m.payload)
        for r in res.received:
            self._received.setdefault(r.key, set()).add(rid)
        self._emit("GossipRecv", msg=m.id, src=m.src, dst=rid,
                   records=[render_key(r.key) for r in res.received], ts=m.payload.ts.render())
        self._applied_events(rid, res.applied)
        self._unblocked_events(rid, res.unblocked)
        self._track(rid)
        if self.redeliver:
            self._check_redelivery(rid, m.payload)
        self._run_gc(rid)

    def _check_redelivery(self, rid, g: Gossip):
        """Deliver ``g`` a second time to the live replica; it must change nothing visible."""
        rep = self.replicas[rid]
        before = (dict(rep.store), rep.val, len(rep.pending))
        again = rep.on_gossip(g)
        after = (dict(rep.store), rep.val, len(rep.pending))
        if again.received or again.applied or again.unblocked or before != after:
            raise AssertionError(f"re-delivered gossip {g.sender}->{rid} changed visible state")

    def _tick(self):
        for rid in sorted(self.replicas):
            rep = self.replicas[rid]
            targets = [j for j in self.peers[rid] if self._has_news(rep, j)]
            self._gossip_from(rid, targets)
            self._run_gc(rid)
        if self._work_left():
            heapq.heappush(self._heap, (self.time + self.sc.period, self._sched_step, -1, None))

    def _has_news(self, rep, j):
        if self.mode == "baseline":
            return any(j not in rep.sent.get(k, ()) for k in rep.log)
        shared = self.topo.share.shared_vars(rep.id, j)
        return any(r.var in shared and j not in rep.sent.get(k, ()) for k, r in rep.log.items())

    def _work_left(self):
        if any(q for q in self._queue.values()) or any(c.outstanding for c in self.clients.values()):
            return True
        if any(item[3] is not None for item in self._heap):
            return True
        for rep in self.replicas.values():
            if rep.pending or any(k not in rep.done for k in rep.log):
                return True
        return False

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunResult:
        self._issue_ready()
        if self.sc.policy == "periodic":
            heapq.heappush(self._heap, (self.sc.period, -1, -1, None))
        handlers = {"update": self._on_update, "query": self._on_query, "reply": self._on_reply, "gossip": self._on_gossip}
        capped = False
        while self._heap:
            if len(self.trace) >= self.step_cap:
                capped = True
                break
            at, _, _, m = heapq.heappop(self._heap)
            self.time = at
            if m is None:
                self._tick()
            else:
                handlers[m.kind](m)
            self._issue_ready()
        pending = any(rep.pending for rep in self.replicas.values())
        unfinished = any(self._queue.values()) or any(c.outstanding for c in self.clients.values())
        self.quiescent = not capped and not pending and not unfinished and not self._heap
        for entry, t in self._blocked_at.items():
            self.stall_time += self.time - t
        return RunResult(self.trace, self._metrics(), self.replicas, self.clients)

    def _metrics(self) -> Metrics:
        topo = self.topo
        if self.mode == "edge":
            edges = {r: len(topo.E(r)) for r in topo.replicas}
            reduced = {r: len(reduction_for(topo, r).edges) for r in topo.replicas}
            client_edges = {c: len(topo.C(c)) for c in topo.clients}
        else:
            n = len(topo.replicas)
            edges = {r: n for r in topo.replicas}
            reduced = dict(edges)
            client_edges = {c: n for c in topo.clients}
        return Metrics(
            mode=self.mode,
            seed=self.seed,
            steps=len(self.trace),
            end_time=self.time,
            quiescent=self.quiescent,
            edges=edges,
            reduced=reduced,
            client_edges=client_edges,
            stalls=sum(1 for e in self.trace if e.kind == "QueryBlocked"),
            stall_time=self.stall_time,
            messages=dict(sorted(self.messages.items())),
            max_log=self.max_log,
            max_done=self.max_done,
        )


def run(sc: Scenario, seed: int | None = None, **kw) -> RunResult:
    """Run ``sc`` under the edge-timestamp protocol."""
    return Simulation(sc, seed, mode="edge", **kw).run()


def run_baseline(sc: Scenario, seed: int | None = None, **kw) -> RunResult:
    """Run ``sc`` under the replica-indexed baseline on the same harness."""
    return Simulation(sc, seed, mode="baseline", **kw).run()


def run_mode(sc: Scenario, seed: int | None = None, mode: str | None = None, **kw) -> RunResult:
    return Simulation(sc, seed, mode=mode, **kw).run()


def random_scenario(
    seed: int,
    *,
    max_replicas: int = 6,
    max_vars: int = 8,
    max_clients: int = 4,
    max_ops: int = 40,
    policies=("after-update", "after-update", "periodic"),
) -> Scenario:
    """A seeded random scenario.  Values are unique per update."""
    rng = random.Random(seed)
    n = rng.randint(2, max_replicas)
    m = rng.randint(1, max_vars)
    replicas = [f"r{k + 1}" for k in range(n)]
    variables = [f"x{k + 1}" for k in range(m)]
    stores = {r: set() for r in replicas}
    for x in variables:
        for r in rng.sample(replicas, rng.randint(1, min(3, n))):
            stores[r].add(x)
    for r in replicas:
        if not stores[r]:
            stores[r].add(rng.choice(variables))
    clients = {}
    for k in range(rng.randint(1, max_clients)):
        clients[f"c{k + 1}"] = frozenset(rng.sample(replicas, rng.randint(1, min(3, n))))

    entries = []
    updates = []
    for k in range(rng.randint(1, max_ops)):
        c = rng.choice(sorted(clients))
        r = rng.choice(sorted(clients[c]))
        x = rng.choice(sorted(stores[r]))
        eid = f"e{k}"
        applied = ()
        if updates and rng.random() < 0.2:
            w = rng.choice(updates)
            holder = rng.choice([h for h in replicas if w.var in stores[h]])
            applied = ((w.id, holder),)
        if rng.random() < 0.5:
            e = ScriptEntry(eid, c, "update", r, x, f"v{k}", after_applied=applied)
            updates.append(e)
        else:
            e = ScriptEntry(eid, c, "query", r, x, after_applied=applied)
        entries.append(e)

    lo = rng.randint(0, 3)
    default = (lo, lo + rng.randint(0, 20))
    channels = {}
    nodes = replicas + sorted(clients)
    for _ in range(rng.randint(0, 4)):
        a, b = rng.sample(nodes, 2)
        slow = rng.randint(0, 40)
        channels[(a, b)] = (slow, slow + rng.randint(0, 40))
    policy = rng.choice(policies)
    return Scenario(
        {r: frozenset(v) for r, v in stores.items()},
        clients,
        tuple(entries),
        NetworkModel(default, channels, seed),
        policy,
        rng.randint(1, 10),
        "edge",
        name=f"random-{seed}",
    )
