"""Edge-indexed vector timestamps.

A clock has a fixed domain of keys (directed edges, or replica ids for the
replica-indexed baseline) and a non-negative counter per key.  Clocks are
immutable; every operation returns a new clock.  Looking up a key outside the
domain is an error, never an implicit zero.
"""
from __future__ import annotations

from collections.abc import Iterable, Mapping


class ClockDomainError(KeyError):
    """A clock was indexed or compared outside its domain."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


def _render_key(k) -> str:
    if isinstance(k, tuple):
        return f"{k[0]}->{k[1]}"
    return str(k)


class EdgeClock(Mapping):
    __slots__ = ("_c", "_hash")

    def __init__(self, counters: Mapping | Iterable = ()):
        c = dict(counters)
        for k, v in c.items():
            if not isinstance(v, int) or v < 0:
                raise ValueError(f"counter for {_render_key(k)} must be a non-negative int, got {v!r}")
        self._c = c
        self._hash = None

    def __getitem__(self, e):
        try:
            return self._c[e]
        except KeyError:
            raise ClockDomainError(f"edge {_render_key(e)} not in clock domain") from None

    def __iter__(self):
        return iter(self._c)

    def __len__(self):
        return len(self._c)

    def __contains__(self, e):
        return e in self._c

    def __eq__(self, other):
        if isinstance(other, EdgeClock):
            return self._c == other._c
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(frozenset(self._c.items()))
        return self._hash

    @property
    def domain(self) -> frozenset:
        return frozenset(self._c)

    def render(self) -> str:
        return ",".join(sorted(f"{_render_key(k)}:{v}" for k, v in self._c.items()))

    def __repr__(self):
        return f"EdgeClock({{{self.render()}}})"

    def replace(self, updates: Mapping) -> "EdgeClock":
        missing = [k for k in updates if k not in self._c]
        if missing:
            raise ClockDomainError(f"edge {_render_key(missing[0])} not in clock domain")
        c = dict(self._c)
        c.update(updates)
        return EdgeClock(c)


def zero_clock(domain: Iterable) -> EdgeClock:
    return EdgeClock({e: 0 for e in domain})


def merge(a: EdgeClock, b: EdgeClock) -> EdgeClock:
    """Keep ``a``'s domain; take maxima where ``b`` also has the key."""
    return EdgeClock({e: max(v, b._c[e]) if e in b._c else v for e, v in a._c.items()})


def restrict(c: EdgeClock, domain: Iterable) -> EdgeClock:
    domain = frozenset(domain)
    extra = domain - c.domain
    if extra:
        raise ClockDomainError(f"edge {_render_key(min(extra, key=_render_key))} not in clock domain")
    return EdgeClock({e: c._c[e] for e in domain})


def leq_on(a: EdgeClock, b: EdgeClock, edges: Iterable) -> bool:
    """``a[e] <= b[e]`` for every ``e`` in ``edges`` (vacuously true if empty)."""
    for e in edges:
        if e not in a._c or e not in b._c:
            raise ClockDomainError(f"edge {_render_key(e)} missing from a compared clock")
        if a._c[e] > b._c[e]:
            return False
    return True


def increment(c: EdgeClock, e) -> EdgeClock:
    return c.replace({e: c[e] + 1})


def parse_clock(text: str) -> EdgeClock:
    """Inverse of :meth:`EdgeClock.render`."""
    out = {}
    if not text:
        return EdgeClock()
    for part in text.split(","):
        key, _, count = part.rpartition(":")
        src, sep, dst = key.partition("->")
        out[(src, dst) if sep else key] = int(count)
    return EdgeClock(out)
