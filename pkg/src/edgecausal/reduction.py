"""Timestamp-size reduction through linear redundancy between edge counters.

For a source replica ``j`` the counter on ``j->k`` counts updates issued at
``j`` on variables shared with ``k``.  Writing each such edge as a 0/1 vector
over the variables ``j`` shares inside ``E_i``, any counter whose vector is a
linear combination of other vectors is the same combination of their
counters.  Replica ``i`` therefore only needs to keep a basis of edges per
source.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .graph import ReplicaEdgeSet, ShareGraph, render_edge
from .timestamp import EdgeClock


class ReductionError(ArithmeticError):
    """A reconstructed counter came out non-integral."""


@dataclass(frozen=True)
class SourceIncidence:
    source: str
    variables: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    vectors: dict  # edge -> tuple[int, ...]


@dataclass(frozen=True)
class IncidenceSystem:
    replica: str
    sources: dict  # source replica -> SourceIncidence

    @property
    def nodes(self) -> list[str]:
        return sorted(set(self.sources) | {self.replica})


def build_incidence(g: ShareGraph, sets: dict[str, ReplicaEdgeSet] | ReplicaEdgeSet, i: str | None = None) -> IncidenceSystem:
    es = sets if isinstance(sets, ReplicaEdgeSet) else sets[i]
    i = es.replica
    by_source: dict[str, list] = {}
    for e in es.directed:
        by_source.setdefault(e[0], []).append(e)
    sources = {}
    for j, edges in by_source.items():
        edges = tuple(sorted(edges))
        xs = tuple(sorted(set().union(*(g.shared_vars(*e) for e in edges))))
        vectors = {}
        for e in edges:
            shared = g.shared_vars(*e)
            vectors[e] = tuple(1 if x in shared else 0 for x in xs)
        sources[j] = SourceIncidence(j, xs, edges, vectors)
    return IncidenceSystem(i, dict(sorted(sources.items())))


@dataclass(frozen=True)
class SourceBasis:
    source: str
    rank: int
    basis: tuple[tuple[str, str], ...]
    # non-basis edge -> coefficients aligned with ``basis``
    coefficients: dict


@dataclass(frozen=True)
class ReductionBasis:
    replica: str
    per_source: dict  # source -> SourceBasis

    @property
    def edges(self) -> frozenset[tuple[str, str]]:
        return frozenset(e for sb in self.per_source.values() for e in sb.basis)

    @property
    def all_edges(self) -> frozenset[tuple[str, str]]:
        return self.edges | frozenset(e for sb in self.per_source.values() for e in sb.coefficients)

    def lookup(self, e):
        sb = self.per_source.get(e[0])
        if sb is None or (e not in sb.basis and e not in sb.coefficients):
            raise KeyError(f"edge {render_edge(e)} not covered by the reduction of {self.replica}")
        return sb


def _select_basis(vectors):
    """First-fit maximal independent subset with exact coefficients.

    ``vectors`` is an ordered list of ``(key, vector)``.  Returns the chosen
    keys and, for every other key, its coefficients over the chosen ones.
    """
    # echelon rows: (pivot column, row, combination over chosen basis indices)
    rows: list[tuple[int, list[Fraction], list[Fraction]]] = []
    chosen = []
    pending = []
    for key, vec in vectors:
        r = [Fraction(v) for v in vec]
        combo = [Fraction(0)] * len(chosen)
        for pivot, row, rcombo in rows:
            f = r[pivot]
            if f:
                r = [a - f * b for a, b in zip(r, row)]
                combo = [a - f * b for a, b in zip(combo, rcombo + [Fraction(0)] * (len(combo) - len(rcombo)))]
        nz = next((c for c, v in enumerate(r) if v), None)
        if nz is None:
            # r = vec - sum(combo) * basis == 0
            pending.append((key, [-c for c in combo]))
            continue
        p = r[nz]
        row = [v / p for v in r]
        combo = combo + [Fraction(1)]
        combo = [c / p for c in combo]
        # keep rows fully reduced on the new pivot column
        new_rows = []
        for pivot, orow, ocombo in rows:
            f = orow[nz]
            if f:
                ocombo = ocombo + [Fraction(0)] * (len(combo) - len(ocombo))
                orow = [a - f * b for a, b in zip(orow, row)]
                ocombo = [a - f * b for a, b in zip(ocombo, combo)]
            new_rows.append((pivot, orow, ocombo))
        rows = new_rows + [(nz, row, combo)]
        chosen.append(key)
    coeffs = {}
    for key, combo in pending:
        combo = combo + [Fraction(0)] * (len(chosen) - len(combo))
        coeffs[key] = tuple(combo)
    return chosen, coeffs


def compute_basis(sys: IncidenceSystem) -> ReductionBasis:
    per_source = {}
    for j, inc in sys.sources.items():
        chosen, coeffs = _select_basis([(e, inc.vectors[e]) for e in inc.edges])
        per_source[j] = SourceBasis(j, len(chosen), tuple(chosen), coeffs)
    return ReductionBasis(sys.replica, per_source)


def reduce_clock(basis: ReductionBasis, clock: EdgeClock) -> EdgeClock:
    return EdgeClock({e: clock[e] for e in basis.edges})


def reconstruct(basis: ReductionBasis, reduced: EdgeClock, e) -> int:
    sb = basis.lookup(e)
    if e in sb.basis:
        return reduced[e]
    total = sum((a * reduced[b] for a, b in zip(sb.coefficients[e], sb.basis)), Fraction(0))
    if total.denominator != 1:
        raise ReductionError(f"counter for {render_edge(e)} reconstructs to non-integer {total}")
    return int(total)


def reduction_for(topology, i: str) -> ReductionBasis:
    return compute_basis(build_incidence(topology.share, topology.sets, i))


def coefficient_table(basis: ReductionBasis) -> list[str]:
    lines = []
    for j, sb in basis.per_source.items():
        for e, coeffs in sorted(sb.coefficients.items()):
            terms = " + ".join(f"{c}*{render_edge(b)}" for c, b in zip(coeffs, sb.basis) if c)
            lines.append(f"{render_edge(e)} = {terms or '0'}")
    return lines
