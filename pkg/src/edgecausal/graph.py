"""Share graphs, augmented share graphs and the per-replica edge sets.

Replicas and variables are opaque strings.  An undirected edge is a sorted
pair ``(a, b)`` with ``a < b``; a directed edge is an ordered pair
``(src, dst)`` rendered ``"src->dst"``.
"""
from __future__ import annotations

import itertools
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

import networkx as nx

SHARE = "share"
AUGMENTED = "augmented"
BOTH = "both"


class ConfigurationError(ValueError):
    """Raised for malformed replica/client configurations."""


def uedge(a: str, b: str) -> tuple[str, str]:
    if a == b:
        raise ConfigurationError(f"self-loop on {a!r}")
    return (a, b) if a < b else (b, a)


def render_edge(e: tuple[str, str]) -> str:
    return f"{e[0]}->{e[1]}"


def parse_edge(text: str) -> tuple[str, str]:
    src, sep, dst = text.partition("->")
    if not sep or not src or not dst:
        raise ValueError(f"not a directed edge: {text!r}")
    return (src, dst)


def directed(edges: Iterable[tuple[str, str]]) -> frozenset[tuple[str, str]]:
    """Both directions of every undirected edge."""
    out = set()
    for a, b in edges:
        out.add((a, b))
        out.add((b, a))
    return frozenset(out)


def _freeze(mapping):
    return MappingProxyType(dict(mapping))


def normalize_assignment(assign) -> dict[str, frozenset[str]]:
    """Accept a mapping or an iterable of ``(replica, variables)`` pairs."""
    pairs = assign.items() if isinstance(assign, Mapping) else assign
    out: dict[str, frozenset[str]] = {}
    for rid, variables in pairs:
        if rid in out:
            raise ConfigurationError(f"duplicate replica id {rid!r}")
        if isinstance(variables, str):
            raise ConfigurationError(f"replica {rid!r}: variables must be a list")
        out[str(rid)] = frozenset(str(v) for v in variables)
    return out


@dataclass(frozen=True)
class ShareGraph:
    replicas: tuple[str, ...]
    variables: Mapping[str, frozenset[str]]
    shared: Mapping[tuple[str, str], frozenset[str]]

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return frozenset(self.shared)

    def shared_vars(self, a: str, b: str) -> frozenset[str]:
        if a == b:
            return frozenset()
        return self.shared.get(uedge(a, b), frozenset())

    def neighbors(self, i: str) -> list[str]:
        return sorted(b if a == i else a for a, b in self.shared if i in (a, b))

    def holders(self, x: str) -> list[str]:
        return [r for r in self.replicas if x in self.variables[r]]


@dataclass(frozen=True)
class AugmentedShareGraph:
    replicas: tuple[str, ...]
    labels: Mapping[tuple[str, str], str]
    share: ShareGraph

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return frozenset(self.labels)

    def augmented_only(self) -> list[tuple[str, str]]:
        return sorted(e for e, lab in self.labels.items() if lab == AUGMENTED)

    def shared_vars(self, a: str, b: str) -> frozenset[str]:
        return self.share.shared_vars(a, b)

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.replicas)
        g.add_edges_from(self.labels)
        return g


def build_share_graph(assign) -> ShareGraph:
    variables = normalize_assignment(assign)
    replicas = tuple(sorted(variables))
    shared = {}
    for a, b in itertools.combinations(replicas, 2):
        common = variables[a] & variables[b]
        if common:
            shared[(a, b)] = frozenset(common)
    return ShareGraph(replicas, _freeze(variables), _freeze(shared))


def normalize_access(access, replicas) -> dict[str, frozenset[str]]:
    out = {}
    known = set(replicas)
    for cid, rs in access.items():
        rs = frozenset(str(r) for r in rs)
        if not rs:
            raise ConfigurationError(f"client {cid!r} accesses no replica")
        unknown = sorted(rs - known)
        if unknown:
            raise ConfigurationError(f"client {cid!r} references unknown replica {unknown[0]!r}")
        out[str(cid)] = rs
    return out


def augment(g: ShareGraph, access: Mapping[str, Iterable[str]]) -> AugmentedShareGraph:
    access = normalize_access(access, g.replicas)
    labels = {e: SHARE for e in g.shared}
    # a client touching a single replica contributes no pair
    for rs in access.values():
        for a, b in itertools.combinations(sorted(rs), 2):
            e = (a, b)
            if labels.get(e) in (SHARE, BOTH):
                labels[e] = BOTH
            else:
                labels[e] = AUGMENTED
    return AugmentedShareGraph(g.replicas, _freeze(labels), g)


def loop_edges(gp: AugmentedShareGraph, i: str) -> frozenset[tuple[str, str]]:
    """Undirected edges lying on some simple cycle through ``i``.

    An edge is on a simple cycle through ``i`` exactly when it belongs to a
    non-bridge biconnected component containing ``i``.
    """
    if i not in gp.replicas:
        raise ConfigurationError(f"unknown replica {i!r}")
    out = set()
    for comp in nx.biconnected_component_edges(gp.to_networkx()):
        if len(comp) < 2:
            continue
        if any(i in e for e in comp):
            out.update(uedge(a, b) for a, b in comp)
    return frozenset(out)


def brute_force_loop_edges(gp, i: str, max_vertices: int = 10) -> frozenset[tuple[str, str]]:
    """Union of edges over all simple cycles through ``i``, by path search.

    ``gp`` is anything with ``replicas`` and ``edges``.
    """
    if len(gp.replicas) > max_vertices:
        raise ValueError(f"brute force limited to {max_vertices} vertices")
    if i not in gp.replicas:
        raise ConfigurationError(f"unknown replica {i!r}")
    adj = {v: set() for v in gp.replicas}
    for a, b in gp.edges:
        adj[a].add(b)
        adj[b].add(a)
    found = set()

    def extend(path, on_path):
        tail = path[-1]
        for nxt in sorted(adj[tail]):
            if nxt == i and len(path) >= 3:
                found.update(uedge(p, q) for p, q in zip(path, path[1:]))
                found.add(uedge(tail, i))
            elif nxt not in on_path:
                on_path.add(nxt)
                path.append(nxt)
                extend(path, on_path)
                path.pop()
                on_path.discard(nxt)

    extend([i], {i})
    return frozenset(found)


@dataclass(frozen=True)
class ReplicaEdgeSet:
    replica: str
    loop_aug: frozenset[tuple[str, str]]      # L'_i
    loop: frozenset[tuple[str, str]]          # L_i
    incident_aug: frozenset[tuple[str, str]]  # N'_i
    incident: frozenset[tuple[str, str]]      # N_i
    undirected: frozenset[tuple[str, str]]    # E'_i
    directed: frozenset[tuple[str, str]]      # E_i

    @property
    def incoming(self) -> frozenset[tuple[str, str]]:
        return frozenset(e for e in self.directed if e[1] == self.replica)


def edge_sets(g: ShareGraph, gp: AugmentedShareGraph) -> dict[str, ReplicaEdgeSet]:
    share_edges = g.edges
    out = {}
    for i in gp.replicas:
        la = loop_edges(gp, i)
        na = frozenset(e for e in gp.edges if i in e)
        lo = la & share_edges
        ni = na & share_edges
        und = lo | ni
        out[i] = ReplicaEdgeSet(i, la, lo, na, ni, und, directed(und))
    return out


def client_edge_sets(access, sets: Mapping[str, ReplicaEdgeSet]) -> dict[str, frozenset[tuple[str, str]]]:
    return {
        str(c): frozenset().union(*(sets[r].directed for r in rs))
        for c, rs in access.items()
    }


@dataclass(frozen=True)
class Topology:
    """Everything the protocol needs to know about a configuration."""

    share: ShareGraph
    augmented: AugmentedShareGraph
    access: Mapping[str, frozenset[str]]
    sets: Mapping[str, ReplicaEdgeSet]
    client_sets: Mapping[str, frozenset[tuple[str, str]]]
    _out: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def build(cls, assign, access) -> "Topology":
        g = build_share_graph(assign)
        gp = augment(g, access)
        acc = normalize_access(access, g.replicas)
        sets = edge_sets(g, gp)
        return cls(g, gp, _freeze(acc), _freeze(sets), _freeze(client_edge_sets(acc, sets)))

    @property
    def replicas(self) -> tuple[str, ...]:
        return self.share.replicas

    @property
    def clients(self) -> tuple[str, ...]:
        return tuple(sorted(self.access))

    def E(self, i: str) -> frozenset[tuple[str, str]]:
        return self.sets[i].directed

    def C(self, c: str) -> frozenset[tuple[str, str]]:
        return self.client_sets[c]

    def edge_vars(self, e: tuple[str, str]) -> frozenset[str]:
        return self.share.shared_vars(*e)

    def out_edges(self, i: str, x: str) -> list[tuple[str, str]]:
        """Directed share edges ``i->k`` whose shared set contains ``x``."""
        key = (i, x)
        if key not in self._out:
            self._out[key] = [(i, k) for k in self.share.neighbors(i) if x in self.share.shared_vars(i, k)]
        return self._out[key]
