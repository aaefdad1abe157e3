"""Trace events and their line-oriented JSON encoding."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

KINDS = (
    "ClientSend",
    "ReplicaRecvUpdate",
    "ReplicaRecvQuery",
    "ApplyWrite",
    "QueryBlocked",
    "QueryUnblocked",
    "QueryReply",
    "ClientRecvReply",
    "GossipSend",
    "GossipRecv",
    "GCRun",
)

# events a client or an outside observer of the store can see
VISIBLE_KINDS = frozenset({
    "ClientSend",
    "ReplicaRecvUpdate",
    "ReplicaRecvQuery",
    "ApplyWrite",
    "QueryBlocked",
    "QueryUnblocked",
    "QueryReply",
    "ClientRecvReply",
})


@dataclass(frozen=True)
class TraceEvent:
    step: int
    time: int
    kind: str
    data: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    def get(self, key, default=None):
        return self.data.get(key, default)

    def to_json(self) -> str:
        return json.dumps({"step": self.step, "time": self.time, "kind": self.kind, **self.data}, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TraceEvent":
        d = json.loads(line)
        step, time, kind = d.pop("step"), d.pop("time"), d.pop("kind")
        if kind not in KINDS:
            raise ValueError(f"unknown trace event kind {kind!r}")
        return cls(step, time, kind, d)


def dumps(events) -> str:
    return "".join(e.to_json() + "\n" for e in events)


def loads(text: str) -> list[TraceEvent]:
    return [TraceEvent.from_json(line) for line in text.splitlines() if line.strip()]


def write_trace(events, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        fp.write(dumps(events))


def read_trace(path) -> list[TraceEvent]:
    with open(path, encoding="utf-8") as fp:
        return loads(fp.read())


def visible(events):
    """Externally visible events with step indices dropped."""
    return [(e.time, e.kind, e.to_json().split(',"kind":', 1)[1]) for e in events if e.kind in VISIBLE_KINDS]
