"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""
import time

import pytest

from conftest import FIG1, random_graph_topology, record_acceptance
from edgecausal.checker import build_causal_order, check_all, classify_stalls
from edgecausal.graph import Topology, brute_force_loop_edges, loop_edges
from edgecausal.protocol import FAULTS
from edgecausal.reduction import reconstruct, reduce_clock, reduction_for
from edgecausal.scenario import fixture_names, load_fixture
from edgecausal.sim import random_scenario, run, run_baseline
from edgecausal.timestamp import leq_on, parse_clock
from edgecausal.trace import dumps, visible

RANDOM_SCENARIOS = 1000
RANDOM_GRAPHS = 1000
RECONSTRUCTION_RUNS = 100
INVARIANT_RUNS = 100


def e(a, b):
    return (a, b)


class Criterion:
    """Times a criterion body and records its verdict line."""

    def __init__(self, n, limit_s):
        self.n, self.limit = n, limit_s
        self.failures = []

    def expect(self, ok, what):
        if not ok:
            self.failures.append(what)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is None and elapsed >= self.limit:
            self.failures.append(f"took {elapsed:.2f}s")
        if exc_type is not None:
            self.failures.append(f"raised {exc_type.__name__}: {exc}")
        verdict = "FAIL" if self.failures else "PASS"
        detail = "; ".join(self.failures[:5]) if self.failures else "ok"
        record_acceptance(f"criterion {self.n} {verdict} {detail} (tolerance exact, {elapsed:.2f}s of < {self.limit}s)")
        return False


def test_criterion_1_fig4_sets():
    with Criterion(1, 1.0) as c:
        t = Topology.build(FIG1, {"c1": ["r1", "r3"], "c2": ["r2"], "c3": ["r4"]})
        e12 = {e("r1", "r2"), e("r2", "r1"), e("r2", "r3"), e("r3", "r2")}
        e34 = {e("r3", "r4"), e("r4", "r3")}
        c.expect(t.E("r1") == e12, "E_1")
        c.expect(t.E("r2") == e12, "E_2")
        c.expect(t.E("r3") == e12 | e34, "E_3")
        c.expect(t.E("r4") == e34, "E_4")
        c.expect(t.C("c1") == t.E("r1") | t.E("r3"), "C_1")
        c.expect(t.C("c2") == t.E("r2"), "C_2")
        c.expect(t.C("c3") == t.E("r4"), "C_3")
    assert not c.failures


def test_criterion_2_all_access_covers_every_share_edge():
    with Criterion(2, 1.0) as c:
        t = load_fixture("fig2_all_access").topology
        n_directed = 2 * len(t.share.edges)
        c.expect(n_directed == 6, f"share graph has {n_directed} directed edges")
        for r in t.replicas:
            c.expect(len(t.E(r)) == 6, f"|E_{r}|={len(t.E(r))}")
    assert not c.failures


def test_criterion_3_loop_edges_match_brute_force():
    with Criterion(3, 60.0) as c:
        topos = [random_graph_topology(s, max_vertices=6) for s in range(RANDOM_GRAPHS)]
        topos += [load_fixture(n).topology for n in fixture_names()]
        checked = 0
        for t in topos:
            for v in t.replicas:
                checked += 1
                if loop_edges(t.augmented, v) != brute_force_loop_edges(t.augmented, v):
                    c.expect(False, f"mismatch at {v}")
        c.expect(checked > RANDOM_GRAPHS, "too few vertices checked")
    assert not c.failures


def test_criterion_4_false_dependency_eliminated():
    with Criterion(4, 1.0) as c:
        sc = load_fixture("fig3")
        seed = sc.network.seed
        base = run_baseline(sc, seed).trace
        edge_res = run(sc, seed)
        _, false_stalls = classify_stalls(base, build_causal_order(base), sc.replicas)
        c.expect(len(false_stalls) >= 1, f"baseline false stalls {len(false_stalls)}")
        c.expect(edge_res.metrics.stalls == 0, f"edge stalls {edge_res.metrics.stalls}")
    assert not c.failures


def test_criterion_5_loop_dependency_enforced():
    with Criterion(5, 5.0) as c:
        sc = load_fixture("fig6_ring")
        trace = run(sc).trace
        blocked = [ev for ev in trace if ev.kind == "QueryBlocked"]
        unblocked = [ev for ev in trace if ev.kind == "QueryUnblocked"]
        c.expect(len(blocked) == 1 and len(unblocked) == 1, f"{len(blocked)} blocks, {len(unblocked)} unblocks")
        if len(blocked) == 1 and len(unblocked) == 1:
            b, u = blocked[0], unblocked[0]
            c.expect(b["entry"] == u["entry"] and b.step < u.step, "unblock does not match block")
            released_by = trace[u.step - 1]
            while released_by.kind == "ApplyWrite":
                released_by = trace[released_by.step - 1]
            c.expect(released_by.kind == "GossipRecv" and released_by["dst"] == u["replica"], "unblock not caused by gossip")
        c.expect(check_all(trace, sc.replicas) == [], "violations on clean run")
        for fault in sorted(FAULTS):
            n = len(check_all(run(sc, faults=[fault]).trace, sc.replicas))
            c.expect(n >= 1, f"fault {fault} undetected")
    assert not c.failures


def test_criterion_6_random_safety_and_liveness():
    with Criterion(6, 300.0) as c:
        for seed in range(RANDOM_SCENARIOS):
            sc = random_scenario(seed, max_replicas=6, max_vars=8, max_clients=4, max_ops=40)
            res = run(sc)
            vs = check_all(res.trace, sc.replicas)
            c.expect(not vs, f"seed {seed}: {vs[0].render() if vs else ''}")
            c.expect(res.metrics.quiescent, f"seed {seed} not quiescent")
    assert not c.failures


def _scenarios(n_random):
    return [load_fixture(n) for n in fixture_names()] + [random_scenario(s) for s in range(n_random)]


def test_criterion_7_reduction_is_lossless():
    with Criterion(7, 60.0) as c:
        checks = 0
        for sc in _scenarios(RECONSTRUCTION_RUNS):
            bases = {r: reduction_for(sc.topology, r) for r in sc.topology.replicas}

            def observe(sim, ev):
                nonlocal checks
                for rid, rep in sim.replicas.items():
                    b = bases[rid]
                    reduced = reduce_clock(b, rep.rep)
                    for edge in rep.edges:
                        checks += 1
                        if reconstruct(b, reduced, edge) != rep.rep[edge]:
                            c.expect(False, f"{sc.name} step {ev.step} {rid} {edge}")

            run(sc, observer=observe)
        c.expect(checks > 0, "nothing checked")
        t = load_fixture("shared_xy").topology
        full, reduced = len(t.E("r1")), len(reduction_for(t, "r1").edges)
        c.expect(reduced == full - 2, f"|reduced E_1|={reduced}, |E_1|={full}")
    assert not c.failures


def _clock_monotone(trace):
    last = {}
    for ev in trace:
        if ev.kind == "ClientRecvReply":
            clock = parse_clock(ev["clock"])
            prev = last.get(ev["client"])
            if prev is not None and not leq_on(prev, clock, prev.domain):
                return f"client {ev['client']} clock regressed at step {ev.step}"
            last[ev["client"]] = clock
    return None


def _ts_contiguous(trace, topo):
    issued = {}
    applied = {}
    for ev in trace:
        if ev.kind not in ("ReplicaRecvUpdate", "ApplyWrite"):
            continue
        origin = ev["key"].split("#")[0]
        ts = parse_clock(ev["ts"])
        for edge in topo.out_edges(origin, ev["var"]):
            if ev.kind == "ReplicaRecvUpdate":
                want = issued.get(edge, 0) + 1
                if ts[edge] != want:
                    return f"{ev['key']} issued {edge}={ts[edge]}, expected {want}"
                issued[edge] = want
            elif ev["replica"] == edge[1]:
                want = applied.get(edge, 0) + 1
                if ts[edge] != want:
                    return f"{ev['key']} applied at {edge[1]} with {edge}={ts[edge]}, expected {want}"
                applied[edge] = want
    return None


def test_criterion_8_protocol_invariants():
    with Criterion(8, 120.0) as c:
        counts = {"val<=rep": 0, "val<=rep incoming": 0, "contiguity": 0, "monotone": 0, "redelivery": 0, "gc": 0}
        first = {}

        def note(kind, msg):
            counts[kind] += 1
            first.setdefault(kind, msg)

        for sc in _scenarios(INVARIANT_RUNS):

            def observe(sim, ev):
                for rid, rep in sim.replicas.items():
                    if not leq_on(rep.val, rep.rep, rep.edges):
                        bad = sorted(x for x in rep.edges if rep.val[x] > rep.rep[x])
                        note("val<=rep", f"{sc.name} step {ev.step} {rid} on {bad[0]}")
                    if not leq_on(rep.val, rep.rep, rep.incoming):
                        note("val<=rep incoming", f"{sc.name} step {ev.step} {rid}")

            res = run(sc, observer=observe)
            msg = _ts_contiguous(res.trace, sc.topology)
            if msg:
                note("contiguity", f"{sc.name}: {msg}")
            msg = _clock_monotone(res.trace)
            if msg:
                note("monotone", f"{sc.name}: {msg}")
            try:
                run(sc, redeliver=True)
            except AssertionError as exc:
                note("redelivery", f"{sc.name}: {exc}")
            if visible(res.trace) != visible(run(sc, gc=True).trace):
                note("gc", sc.name)
        record_acceptance("criterion 8 sub-checks: " + ", ".join(f"{k}={n}" for k, n in counts.items()))
        for kind, n in counts.items():
            c.expect(n == 0, f"{kind}: {n} events, first {first.get(kind)}")
    assert not c.failures


def test_criterion_9_deterministic_traces(tmp_path):
    with Criterion(9, 10.0) as c:
        for sc in _scenarios(20):
            a, b = dumps(run(sc, 7).trace), dumps(run(sc, 7).trace)
            c.expect(a.encode() == b.encode(), sc.name)
        sc = load_fixture("fig6_ring")
        paths = []
        for d in ("a", "b"):
            p = tmp_path / f"{d}.jsonl"
            p.write_text(dumps(run(sc).trace), encoding="utf-8", newline="\n")
            paths.append(p)
        c.expect(paths[0].read_bytes() == paths[1].read_bytes(), "trace files differ")
    assert not c.failures
