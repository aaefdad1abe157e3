import random

import pytest

from edgecausal.graph import Topology

ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_graph_topology(seed: int, max_vertices: int = 6) -> Topology:
    """Topology whose share graph is an arbitrary random simple graph.

    Each edge gets its own variable, isolated replicas a private one, and no
    client adds augmented edges.
    """
    rng = random.Random(seed)
    n = rng.randint(1, max_vertices)
    nodes = [f"v{k}" for k in range(n)]
    p = rng.random()
    assign = {v: set() for v in nodes}
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < p:
                x = f"e{a}_{b}"
                assign[nodes[a]].add(x)
                assign[nodes[b]].add(x)
    for v in nodes:
        if not assign[v]:
            assign[v].add(f"own_{v}")
    return Topology.build(assign, {})


FIG1 = {"r1": ["x"], "r2": ["x", "y"], "r3": ["y", "z"], "r4": ["z"]}


@pytest.fixture
def fig4_topology():
    return Topology.build(FIG1, {"c1": ["r1", "r3"], "c2": ["r2"], "c3": ["r4"]})
