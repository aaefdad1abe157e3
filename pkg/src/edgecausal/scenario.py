"""Scenario files: topology, operation script, network model and gossip policy.

A scenario is a YAML document::

    mode: edge                 # edge | baseline
    replicas: {r1: [x], r2: [x, y]}
    clients: {c1: [r1, r2]}
    network:
      seed: 0
      delay: [1, 3]            # default [min, max] ticks for every channel
      channels: {r2->r3: [40, 40]}
    gossip: {policy: after-update}    # or {policy: periodic, period: 5}
    step_cap: 100000
    script:
      - {id: w, client: c1, op: update, replica: r2, var: x, value: "1"}
      - {id: q, client: c1, op: query, replica: r1, var: x, after_applied: [w, r1]}

Guards: ``after`` (entry ids whose reply must have arrived), ``after_applied``
and ``after_received`` (``[entry, replica]`` pairs, or lists of them).
Entries of one client always run in script order.
"""
from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import yaml

from .graph import ConfigurationError, Topology, parse_edge

MODES = ("edge", "baseline")
POLICIES = ("after-update", "periodic")
DEFAULT_STEP_CAP = 100_000


class ScenarioError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class _Map(dict):
    line = None

    def __init__(self):
        super().__init__()
        self.lines = {}


class _List(list):
    line = None

    def __init__(self):
        super().__init__()
        self.lines = []


def _line(obj, key=None):
    if key is not None and isinstance(obj, (_Map, _List)):
        try:
            return obj.lines[key] if isinstance(obj, _Map) else obj.lines[key]
        except (KeyError, IndexError):
            pass
    return getattr(obj, "line", None)


def _construct(node, loader):
    if isinstance(node, yaml.MappingNode):
        out = _Map()
        out.line = node.start_mark.line + 1
        for knode, vnode in node.value:
            key = loader.construct_object(knode, deep=True)
            if not isinstance(key, (str, int)):
                raise ScenarioError("mapping keys must be scalars", knode.start_mark.line + 1)
            key = str(key)
            if key in out:
                raise ScenarioError(f"duplicate key {key!r}", knode.start_mark.line + 1)
            out[key] = _construct(vnode, loader)
            out.lines[key] = knode.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        out = _List()
        out.line = node.start_mark.line + 1
        for item in node.value:
            out.append(_construct(item, loader))
            out.lines.append(item.start_mark.line + 1)
        return out
    return loader.construct_object(node, deep=True)


def _parse_yaml(text: str):
    try:
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
            if node is None:
                raise ScenarioError("empty scenario")
            return _construct(node, loader)
        finally:
            loader.dispose()
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ScenarioError(exc.problem or str(exc), mark.line + 1 if mark else None) from None


@dataclass(frozen=True)
class ScriptEntry:
    id: str
    client: str
    op: str
    replica: str
    var: str
    value: str | None = None
    after: tuple[str, ...] = ()
    after_applied: tuple[tuple[str, str], ...] = ()
    after_received: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class NetworkModel:
    default: tuple[int, int] = (1, 1)
    channels: dict = field(default_factory=dict)
    seed: int = 0

    def bounds(self, src: str, dst: str) -> tuple[int, int]:
        return self.channels.get((src, dst), self.default)


@dataclass(frozen=True)
class Scenario:
    replicas: dict
    clients: dict
    script: tuple[ScriptEntry, ...]
    network: NetworkModel = NetworkModel()
    policy: str = "after-update"
    period: int = 5
    mode: str = "edge"
    step_cap: int = DEFAULT_STEP_CAP
    name: str = ""

    @cached_property
    def topology(self) -> Topology:
        return Topology.build(self.replicas, self.clients)

    def entry(self, eid: str) -> ScriptEntry:
        return self._entries[eid]

    @cached_property
    def _entries(self):
        return {e.id: e for e in self.script}

    def to_data(self) -> dict:
        def entry(e):
            d = {"id": e.id, "client": e.client, "op": e.op, "replica": e.replica, "var": e.var}
            if e.op == "update":
                d["value"] = e.value
            if e.after:
                d["after"] = list(e.after)
            if e.after_applied:
                d["after_applied"] = [list(p) for p in e.after_applied]
            if e.after_received:
                d["after_received"] = [list(p) for p in e.after_received]
            return d

        data = {
            "mode": self.mode,
            "replicas": {r: sorted(v) for r, v in self.replicas.items()},
            "clients": {c: sorted(v) for c, v in self.clients.items()},
            "network": {
                "seed": self.network.seed,
                "delay": list(self.network.default),
                "channels": {f"{a}->{b}": list(v) for (a, b), v in sorted(self.network.channels.items())},
            },
            "gossip": {"policy": self.policy, "period": self.period},
            "step_cap": self.step_cap,
            "script": [entry(e) for e in self.script],
        }
        if not data["network"]["channels"]:
            del data["network"]["channels"]
        return data

    def dump(self) -> str:
        return yaml.safe_dump(self.to_data(), sort_keys=False, default_flow_style=None)


def _expect(cond, message, line):
    if not cond:
        raise ScenarioError(message, line)


def _str_list(value, what, line):
    _expect(isinstance(value, list), f"{what} must be a list", line)
    _expect(all(isinstance(v, (str, int)) and not isinstance(v, bool) for v in value), f"{what} must hold names", line)
    return [str(v) for v in value]


def _bounds(value, what, line):
    _expect(
        isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in value),
        f"{what} must be [min, max] integers",
        line,
    )
    lo, hi = value
    _expect(0 <= lo <= hi, f"{what} needs 0 <= min <= max", line)
    return (lo, hi)


def _pairs(value, what, line):
    if value is None:
        return ()
    _expect(isinstance(value, list), f"{what} must be [entry, replica] or a list of them", line)
    if value and not isinstance(value[0], list):
        value = [value]
    out = []
    for p in value:
        _expect(isinstance(p, list) and len(p) == 2, f"{what} must be [entry, replica]", line)
        out.append((str(p[0]), str(p[1])))
    return tuple(out)


KNOWN_TOP = {"mode", "replicas", "clients", "network", "gossip", "step_cap", "script", "name"}
KNOWN_ENTRY = {"id", "client", "op", "replica", "var", "value", "after", "after_applied", "after_received"}


def scenario_from_data(data, name: str = "") -> Scenario:
    _expect(isinstance(data, dict), "scenario must be a mapping", _line(data))
    for k in data:
        _expect(k in KNOWN_TOP, f"unknown section {k!r}", _line(data, k))

    mode = str(data.get("mode", "edge"))
    _expect(mode in MODES, f"mode must be one of {', '.join(MODES)}", _line(data, "mode"))

    reps = data.get("replicas")
    _expect(isinstance(reps, dict) and reps, "section 'replicas' must map replica ids to variable lists", _line(data, "replicas"))
    replicas = {r: frozenset(_str_list(v, f"replica {r!r}", _line(reps, r))) for r, v in reps.items()}

    cls = data.get("clients")
    _expect(isinstance(cls, dict) and cls, "section 'clients' must map client ids to replica lists", _line(data, "clients"))
    clients = {}
    for c, v in cls.items():
        line = _line(cls, c)
        rs = _str_list(v, f"client {c!r}", line)
        _expect(rs, f"client {c!r} must access at least one replica", line)
        _expect(c not in replicas, f"client id {c!r} collides with a replica id", line)
        for r in rs:
            _expect(r in replicas, f"client {c!r} references unknown replica {r!r}", line)
        clients[c] = frozenset(rs)

    net = data.get("network", {}) or {}
    nline = _line(data, "network")
    _expect(isinstance(net, dict), "section 'network' must be a mapping", nline)
    for k in net:
        _expect(k in {"seed", "delay", "channels"}, f"unknown network key {k!r}", _line(net, k))
    seed = net.get("seed", 0)
    _expect(isinstance(seed, int) and not isinstance(seed, bool), "network seed must be an integer", _line(net, "seed"))
    default = _bounds(net.get("delay", [1, 1]), "network delay", _line(net, "delay"))
    nodes = set(replicas) | set(clients)
    channels = {}
    for ch, b in (net.get("channels") or {}).items():
        line = _line(net.get("channels"), ch)
        try:
            src, dst = parse_edge(ch)
        except ValueError:
            raise ScenarioError(f"channel {ch!r} must look like src->dst", line) from None
        _expect(src in nodes and dst in nodes, f"channel {ch!r} names an unknown node", line)
        channels[(src, dst)] = _bounds(b, f"channel {ch!r}", line)

    gossip = data.get("gossip", {}) or {}
    gline = _line(data, "gossip")
    _expect(isinstance(gossip, dict), "section 'gossip' must be a mapping", gline)
    policy = str(gossip.get("policy", "after-update"))
    _expect(policy in POLICIES, f"gossip policy must be one of {', '.join(POLICIES)}", _line(gossip, "policy") or gline)
    period = gossip.get("period", 5)
    _expect(isinstance(period, int) and period > 0, "gossip period must be a positive integer", _line(gossip, "period") or gline)

    step_cap = data.get("step_cap", DEFAULT_STEP_CAP)
    _expect(isinstance(step_cap, int) and step_cap > 0, "step_cap must be a positive integer", _line(data, "step_cap"))

    script_data = data.get("script", []) or []
    _expect(isinstance(script_data, list), "section 'script' must be a list", _line(data, "script"))
    entries = []
    seen = {}
    for n, item in enumerate(script_data):
        line = _line(script_data, n)
        _expect(isinstance(item, dict), "script entries must be mappings", line)
        for k in item:
            _expect(k in KNOWN_ENTRY, f"unknown script key {k!r}", _line(item, k))
        eid = str(item.get("id", f"e{n}"))
        _expect(eid not in seen, f"duplicate script id {eid!r}", line)
        for k in ("client", "op", "replica", "var"):
            _expect(k in item, f"script entry {eid!r} is missing {k!r}", line)
        c, op, r, x = (str(item[k]) for k in ("client", "op", "replica", "var"))
        _expect(c in clients, f"script entry {eid!r} names unknown client {c!r}", _line(item, "client"))
        _expect(op in ("update", "query"), f"script entry {eid!r}: op must be update or query", _line(item, "op"))
        _expect(r in replicas, f"script entry {eid!r} names unknown replica {r!r}", _line(item, "replica"))
        _expect(r in clients[c], f"client {c!r} does not access replica {r!r}", _line(item, "replica"))
        _expect(x in replicas[r], f"replica {r!r} does not store {x!r}", _line(item, "var"))
        value = item.get("value", eid) if op == "update" else None
        after = item.get("after", ())
        after = tuple(str(a) for a in (after if isinstance(after, list) else [after])) if after != () else ()
        entries.append(
            ScriptEntry(
                eid, c, op, r, x,
                None if value is None else str(value),
                after,
                _pairs(item.get("after_applied"), "after_applied", _line(item, "after_applied")),
                _pairs(item.get("after_received"), "after_received", _line(item, "after_received")),
            )
        )
        seen[eid] = line

    by_id = {e.id: e for e in entries}
    graph = {}
    last = {}
    for e in entries:
        deps = set()
        line = seen[e.id]
        for a in e.after:
            _expect(a in by_id, f"script entry {e.id!r} waits for unknown entry {a!r}", line)
            deps.add(a)
        for a, r in e.after_applied + e.after_received:
            _expect(a in by_id, f"script entry {e.id!r} waits for unknown entry {a!r}", line)
            _expect(by_id[a].op == "update", f"script entry {e.id!r} waits on {a!r}, which is not an update", line)
            _expect(r in replicas, f"script entry {e.id!r} names unknown replica {r!r}", line)
            _expect(by_id[a].var in replicas[r], f"replica {r!r} never holds the write of {a!r}", line)
            deps.add(a)
        if e.client in last:
            deps.add(last[e.client])
        last[e.client] = e.id
        graph[e.id] = deps
    try:
        tuple(graphlib.TopologicalSorter(graph).static_order())
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise ScenarioError(f"happens-after guards form a cycle: {' -> '.join(cycle)}", seen[cycle[0]]) from None

    sc = Scenario(
        replicas, clients, tuple(entries), NetworkModel(default, channels, seed),
        policy, period, mode, step_cap, str(data.get("name", name)),
    )
    try:
        sc.topology
    except ConfigurationError as exc:
        raise ScenarioError(str(exc), _line(data, "replicas")) from None
    return sc


def load_scenario(text: str, name: str = "") -> Scenario:
    return scenario_from_data(_parse_yaml(text), name)


def load_scenario_file(path) -> Scenario:
    path = Path(path)
    return load_scenario(path.read_text(), name=path.stem)


FIXTURES = Path(__file__).parent / "fixtures"


def fixture_names() -> list[str]:
    return sorted(p.stem for p in FIXTURES.glob("*.yaml"))


def load_fixture(name: str) -> Scenario:
    return load_scenario_file(FIXTURES / f"{name}.yaml")
