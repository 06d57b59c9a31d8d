"""Causal diagrams with latent confounders (ADMGs).

A :class:`CausalGraph` holds named variables, directed edges for causation and
bidirected edges for unobserved confounding.  Graphs are immutable; surgery
such as :func:`mutilate` returns a new graph.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Mapping

if TYPE_CHECKING:
    from .scopes import MixedPolicyScope

__all__ = [
    "GraphError",
    "Kind",
    "Variable",
    "CausalGraph",
    "parse_graph",
    "serialize_graph",
    "mutilate",
    "is_acyclic",
    "reachable_to_target",
    "topological_order",
    "ancestors",
    "descendants",
    "m_connected",
    "m_separated",
]


class GraphError(ValueError):
    """Raised for malformed graphs or queries about unknown variables."""


class Kind(str, Enum):
    MANIPULABLE = "manipulable"
    CONTEXT = "context"
    TARGET = "target"


@dataclass(frozen=True, order=True)
class Variable:
    name: str
    kind: Kind = Kind.CONTEXT


def _pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class CausalGraph:
    """Acyclic directed mixed graph over named variables.

    The constructor validates names, endpoints, self-loops and the single
    target.  Acyclicity is *not* enforced here because mutilated graphs may
    legitimately be cyclic; :func:`parse_graph` and :meth:`build` check it.
    """

    variables: tuple[Variable, ...]
    directed: frozenset[tuple[str, str]] = field(default_factory=frozenset)
    bidirected: frozenset[tuple[str, str]] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        names = [v.name for v in self.variables]
        seen: set[str] = set()
        for n in names:
            if n in seen:
                raise GraphError(f"duplicate variable name {n!r}")
            seen.add(n)
        object.__setattr__(self, "variables", tuple(sorted(self.variables)))
        object.__setattr__(self, "bidirected", frozenset(_pair(a, b) for a, b in self.bidirected))
        object.__setattr__(self, "directed", frozenset(self.directed))
        for a, b in self.directed | self.bidirected:
            for end in (a, b):
                if end not in seen:
                    raise GraphError(f"unknown edge endpoint {end!r}")
            if a == b:
                raise GraphError(f"self-loop on {a!r}")
        targets = [v.name for v in self.variables if v.kind is Kind.TARGET]
        if len(targets) != 1:
            raise GraphError(f"graph needs exactly one target, found {len(targets)}")

    @classmethod
    def build(
        cls,
        kinds: Mapping[str, Kind | str],
        directed: Iterable[tuple[str, str]] = (),
        bidirected: Iterable[tuple[str, str]] = (),
    ) -> "CausalGraph":
        """Construct and validate an acyclic graph from a ``name -> kind`` map."""
        g = cls(
            tuple(Variable(n, Kind(k)) for n, k in kinds.items()),
            frozenset(directed),
            frozenset(bidirected),
        )
        if not is_acyclic(g):
            raise GraphError("directed part contains a cycle")
        return g

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @cached_property
    def kinds(self) -> dict[str, Kind]:
        return {v.name: v.kind for v in self.variables}

    @cached_property
    def target(self) -> str:
        return next(v.name for v in self.variables if v.kind is Kind.TARGET)

    @cached_property
    def manipulable(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.kind is Kind.MANIPULABLE)

    @cached_property
    def context_only(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables if v.kind is Kind.CONTEXT)

    @cached_property
    def children(self) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {n: set() for n in self.names}
        for a, b in self.directed:
            out[a].add(b)
        return {k: frozenset(v) for k, v in out.items()}

    @cached_property
    def parents(self) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {n: set() for n in self.names}
        for a, b in self.directed:
            out[b].add(a)
        return {k: frozenset(v) for k, v in out.items()}

    @cached_property
    def spouses(self) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {n: set() for n in self.names}
        for a, b in self.bidirected:
            out[a].add(b)
            out[b].add(a)
        return {k: frozenset(v) for k, v in out.items()}

    def check(self, *names: str) -> None:
        for n in names:
            if n not in self.kinds:
                raise GraphError(f"unknown variable {n!r}")

    def __str__(self) -> str:
        return serialize_graph(self)


def parse_graph(text: str) -> CausalGraph:
    """Parse the line-oriented graph format.

    ``var <name> <manipulable|context|target>``, ``edge <a> -> <b>`` and
    ``confound <a> <-> <b>``; ``#`` starts a comment.  Lines may appear in any
    order.
    """
    kinds: dict[str, Kind] = {}
    directed: list[tuple[str, str]] = []
    bidirected: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "var" and len(tok) == 3:
            if tok[1] in kinds:
                raise GraphError(f"line {lineno}: duplicate variable name {tok[1]!r}")
            try:
                kinds[tok[1]] = Kind(tok[2])
            except ValueError:
                raise GraphError(f"line {lineno}: unknown kind {tok[2]!r}") from None
        elif tok[0] == "edge" and len(tok) == 4 and tok[2] == "->":
            directed.append((tok[1], tok[3]))
        elif tok[0] == "confound" and len(tok) == 4 and tok[2] == "<->":
            bidirected.append((tok[1], tok[3]))
        else:
            raise GraphError(f"line {lineno}: cannot parse {raw.strip()!r}")
    return CausalGraph.build(kinds, directed, bidirected)


def serialize_graph(g: CausalGraph) -> str:
    """Canonical text form: one statement per line, lines sorted."""
    lines = [f"var {v.name} {v.kind.value}" for v in g.variables]
    lines += [f"edge {a} -> {b}" for a, b in g.directed]
    lines += [f"confound {a} <-> {b}" for a, b in g.bidirected]
    return "\n".join(sorted(lines)) + "\n"


def mutilate(g: CausalGraph, s: "MixedPolicyScope") -> CausalGraph:
    """Apply a mixed policy scope to ``g``.

    For every pair ``<X | C_X>`` all arrowheads into ``X`` (directed and
    bidirected) are removed and ``C -> X`` is added for each context.  The
    result may be cyclic.
    """
    intervened = {p.intervened for p in s.pairs}
    g.check(*intervened)
    for p in s.pairs:
        g.check(*p.contexts)
    directed = {(a, b) for a, b in g.directed if b not in intervened}
    bidirected = {e for e in g.bidirected if not (e[0] in intervened or e[1] in intervened)}
    for p in s.pairs:
        directed.update((c, p.intervened) for c in p.contexts)
    return CausalGraph(g.variables, frozenset(directed), frozenset(bidirected))


def is_acyclic(g: CausalGraph) -> bool:
    indeg = {n: len(ps) for n, ps in g.parents.items()}
    stack = [n for n, d in indeg.items() if d == 0]
    seen = 0
    while stack:
        n = stack.pop()
        seen += 1
        for c in g.children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    return seen == len(indeg)


def ancestors(g: CausalGraph, nodes: Iterable[str]) -> set[str]:
    """Nodes with a directed path into ``nodes``, including ``nodes`` themselves."""
    out = set(nodes)
    g.check(*out)
    stack = list(out)
    while stack:
        for p in g.parents[stack.pop()]:
            if p not in out:
                out.add(p)
                stack.append(p)
    return out


def descendants(g: CausalGraph, nodes: Iterable[str]) -> set[str]:
    """Nodes reachable from ``nodes`` by directed paths, including ``nodes``."""
    out = set(nodes)
    g.check(*out)
    stack = list(out)
    while stack:
        for c in g.children[stack.pop()]:
            if c not in out:
                out.add(c)
                stack.append(c)
    return out


def reachable_to_target(g: CausalGraph, v: str) -> bool:
    g.check(v)
    return v in ancestors(g, [g.target])


def topological_order(g: CausalGraph) -> list[str]:
    """Kahn's algorithm with lexicographic tie-breaking."""
    indeg = {n: len(ps) for n, ps in g.parents.items()}
    heap = [n for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order: list[str] = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for c in g.children[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != len(indeg):
        raise GraphError("graph has a directed cycle; no topological order")
    return order


def m_connected(g: CausalGraph, source: str, zs: Iterable[str]) -> set[str]:
    """Nodes joined to ``source`` by an m-connecting path given ``zs``.

    A node counts as reached even when it belongs to ``zs`` itself, so a single
    pass answers "is W m-connected to source given zs minus W" for every W.
    Arrival marks: ``True`` means the edge has an arrowhead at the node.
    """
    zs = set(zs)
    g.check(source, *zs)
    in_z_ancestry = ancestors(g, zs) if zs else set()
    reached: set[str] = set()
    seen: set[tuple[str, bool]] = set()
    stack: list[tuple[str, bool]] = []
    for c in g.children[source]:
        stack.append((c, True))
    for p in g.parents[source]:
        stack.append((p, False))
    for s in g.spouses[source]:
        stack.append((s, True))
    while stack:
        v, head = stack.pop()
        if (v, head) in seen:
            continue
        seen.add((v, head))
        if v != source:
            reached.add(v)
        open_noncollider = v not in zs
        if open_noncollider:
            stack.extend((c, True) for c in g.children[v])
        # leaving through an arrowhead at v: collider iff we arrived on one
        passes = (v in in_z_ancestry) if head else open_noncollider
        if passes:
            stack.extend((p, False) for p in g.parents[v])
            stack.extend((s, True) for s in g.spouses[v])
    return reached


def m_separated(g: CausalGraph, xs: Iterable[str], ys: Iterable[str], zs: Iterable[str]) -> bool:
    """m-separation of ``xs`` and ``ys`` given ``zs`` (members of xs/ys are not conditioned on)."""
    xs, ys, zs = set(xs), set(ys), set(zs)
    g.check(*(xs | ys | zs))
    if xs & ys:
        return False
    cond = zs - xs - ys
    return not any(m_connected(g, x, cond) & ys for x in xs)
