import random

import pytest

from edgecausal.checker import (
    BLOCKED_FOREVER,
    EARLY_APPLY,
    STALE_READ,
    UNAPPLIED,
    CheckerError,
    build_causal_order,
    check_all,
    check_liveness,
    check_safety,
    classify_stalls,
)
from edgecausal.protocol import IGNORE_COMP_DEPS, SKIP_QUERY_WAIT, SKIP_UPDATE_CHECK
from edgecausal.scenario import Scenario, ScriptEntry, load_fixture
from edgecausal.sim import random_scenario, run, run_baseline
from edgecausal.trace import TraceEvent


class TraceBuilder:
    def __init__(self):
        self.events = []

    def add(self, kind, **data):
        self.events.append(TraceEvent(len(self.events), len(self.events), kind, data))
        return self

    def send(self, entry, client, op, replica, var):
        return self.add("ClientSend", client=client, entry=entry, op=op, replica=replica, var=var)

    def write(self, entry, client, replica, var, key):
        self.send(entry, client, "update", replica, var)
        return self.add("ReplicaRecvUpdate", replica=replica, client=client, entry=entry, var=var, key=key)

    def apply(self, replica, key, var):
        return self.add("ApplyWrite", replica=replica, key=key, var=var)

    def reply(self, entry, client, replica, var, read):
        return self.add("QueryReply", replica=replica, client=client, entry=entry, var=var, read=read)


ASSIGN = {"r1": ["x"], "r2": ["x", "y"]}


def test_program_order():
    t = TraceBuilder().send("o1", "a", "query", "r1", "x").send("o2", "a", "query", "r1", "x").events
    order = build_causal_order(t)
    assert order.before("o1", "o2") and not order.before("o2", "o1")


def test_read_from_then_program_order_is_transitive():
    b = TraceBuilder()
    b.write("wA", "A", "r2", "x", "r2#1").apply("r2", "r2#1", "x")
    b.send("qB", "B", "query", "r2", "x").reply("qB", "B", "r2", "x", "r2#1")
    b.write("wB", "B", "r2", "y", "r2#2")
    order = build_causal_order(b.events)
    assert order.read_from == {"qB": "wA"}
    assert order.before("wA", "wB")


def test_independent_clients_have_no_cross_edges():
    b = TraceBuilder().write("w1", "A", "r1", "x", "r1#1").write("w2", "B", "r2", "y", "r2#1")
    order = build_causal_order(b.events)
    assert order.ancestors == {"w1": frozenset(), "w2": frozenset()}


def test_unknown_read_tag_is_an_error():
    b = TraceBuilder().send("q", "A", "query", "r1", "x").reply("q", "A", "r1", "x", "r9#9")
    with pytest.raises(CheckerError):
        build_causal_order(b.events)


def test_empty_trace_is_clean():
    order = build_causal_order([])
    assert check_safety([], order, ASSIGN) == []
    assert check_liveness([], ASSIGN) == []
    assert classify_stalls([], order, ASSIGN) == ([], [])


def test_early_apply_detected():
    b = TraceBuilder()
    b.write("w1", "A", "r2", "x", "r2#1").apply("r2", "r2#1", "x")
    b.write("w2", "A", "r2", "x", "r2#2").apply("r2", "r2#2", "x")
    b.apply("r1", "r2#2", "x").apply("r1", "r2#1", "x")
    (v,) = check_safety(b.events, build_causal_order(b.events), ASSIGN)
    assert v.kind == EARLY_APPLY and "r2#1" in v.witness
    assert v.steps == (6,)


def test_stale_read_detected_both_ways():
    b = TraceBuilder()
    b.write("w1", "A", "r2", "x", "r2#1").apply("r2", "r2#1", "x")
    b.send("q1", "A", "query", "r1", "x").reply("q1", "A", "r1", "x", None)
    b.apply("r1", "r2#1", "x")
    b.send("q2", "B", "query", "r1", "x").reply("q2", "B", "r1", "x", None)
    vs = check_safety(b.events, build_causal_order(b.events), ASSIGN)
    assert [v.kind for v in vs] == [STALE_READ, STALE_READ]
    assert "q1" in vs[0].witness and "last write" in vs[1].witness


def test_liveness_reports_missing_apply_and_stuck_query():
    b = TraceBuilder()
    b.write("w1", "A", "r2", "x", "r2#1").apply("r2", "r2#1", "x")
    b.send("q", "B", "query", "r2", "y").add("QueryBlocked", replica="r2", client="B", entry="q", var="y")
    vs = check_liveness(b.events, ASSIGN)
    assert sorted(v.kind for v in vs) == [BLOCKED_FOREVER, UNAPPLIED]


def test_truncated_run_reports_unapplied():
    sc = load_fixture("fig6_ring")
    trace, m = run(sc, step_cap=12)
    assert not m.quiescent
    assert any(v.kind == UNAPPLIED for v in check_liveness(trace, sc.replicas))


def test_no_updates_no_liveness_findings():
    sc = Scenario({"r1": frozenset({"x"})}, {"c": frozenset({"r1"})}, (ScriptEntry("q", "c", "query", "r1", "x"),))
    assert check_liveness(run(sc).trace, sc.replicas) == []


@pytest.mark.parametrize("name", ["fig2_all_access", "fig3", "fig4", "fig6_ring", "full_replication", "shared_xy",
                                  "sequential_zero_delay", "single_replica", "two_messages", "literal_rep_inflation"])
def test_fixtures_are_clean_under_both_protocols(name):
    sc = load_fixture(name)
    for res in (run(sc), run(sc, gc=True), run_baseline(sc)):
        assert check_all(res.trace, sc.replicas) == []


def test_stall_classification_on_fixtures():
    sc = load_fixture("fig3")
    t = run_baseline(sc).trace
    true_stalls, false_stalls = classify_stalls(t, build_causal_order(t), sc.replicas)
    assert (len(true_stalls), len(false_stalls)) == (0, 1)
    sc = load_fixture("fig6_ring")
    t = run(sc).trace
    true_stalls, false_stalls = classify_stalls(t, build_causal_order(t), sc.replicas)
    assert (len(true_stalls), len(false_stalls)) == (1, 0)


@pytest.mark.parametrize("fault,kind", [
    (SKIP_QUERY_WAIT, STALE_READ),
    (SKIP_UPDATE_CHECK, EARLY_APPLY),
    (IGNORE_COMP_DEPS, EARLY_APPLY),
])
def test_fault_injection_is_caught(fault, kind):
    sc = load_fixture("fig6_ring")
    vs = check_all(run(sc, faults=[fault]).trace, sc.replicas)
    assert kind in {v.kind for v in vs}


def _acyclic_single_access(seed):
    """Random tree-shaped share graph where every client uses one replica."""
    rng = random.Random(seed)
    n = rng.randint(2, 6)
    replicas = [f"r{k}" for k in range(n)]
    stores = {r: {f"own{r}"} for r in replicas}
    for k in range(1, n):
        parent = replicas[rng.randrange(k)]
        x = f"t{k}"
        stores[replicas[k]].add(x)
        stores[parent].add(x)
    clients = {f"c{k}": frozenset({rng.choice(replicas)}) for k in range(rng.randint(1, 4))}
    base = random_scenario(seed)
    script = []
    for k in range(rng.randint(1, 30)):
        c = rng.choice(sorted(clients))
        (r,) = clients[c]
        x = rng.choice(sorted(stores[r]))
        op = rng.choice(["update", "query"])
        script.append(ScriptEntry(f"e{k}", c, op, r, x, f"v{k}" if op == "update" else None))
    return Scenario({r: frozenset(v) for r, v in stores.items()}, clients, tuple(script), base.network, base.policy, base.period)


@pytest.mark.parametrize("seed", range(50))
def test_no_false_stalls_on_acyclic_single_access_runs(seed):
    sc = _acyclic_single_access(seed)
    trace = run(sc).trace
    _, false_stalls = classify_stalls(trace, build_causal_order(trace), sc.replicas)
    assert false_stalls == []
