"""Mixed policy scopes: validation, subsumption, pruning, enumeration, fixtures.

A scope is a set of ``<X | C_X>`` pairs: variable ``X`` is set by a policy
that reads the context variables ``C_X``.  Scopes are immutable and have a
canonical ordering so that scope sets, bandit arms and CSV columns are
reproducible.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from typing import Iterable, Iterator, Mapping

from .graph import (
    CausalGraph,
    Kind,
    ancestors,
    descendants,
    is_acyclic,
    m_connected,
    mutilate,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ScopeError",
    "ScopePair",
    "MixedPolicyScope",
    "ScopeSet",
    "validate_mps",
    "subsumes",
    "prune_redundant",
    "enumerate_scopes",
    "load_fixture",
    "FIXTURES",
    "parse_scopes",
    "serialize_scopes",
]

ORIGINS = ("enumerated", "fixture", "user")


class ScopeError(ValueError):
    pass


@dataclass(frozen=True)
class ScopePair:
    intervened: str
    contexts: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "contexts", frozenset(self.contexts))
        if self.intervened in self.contexts:
            raise ScopeError(f"{self.intervened!r} cannot be its own context")

    @cached_property
    def key(self) -> tuple[str, tuple[str, ...]]:
        return (self.intervened, tuple(sorted(self.contexts)))

    def __str__(self) -> str:
        return f"<{self.intervened}|{','.join(sorted(self.contexts))}>"


@dataclass(frozen=True)
class MixedPolicyScope:
    pairs: frozenset[ScopePair] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", frozenset(self.pairs))
        names = [p.intervened for p in self.pairs]
        if len(set(names)) != len(names):
            raise ScopeError("intervened variables must be pairwise distinct")

    @classmethod
    def of(cls, mapping: Mapping[str, Iterable[str]] | None = None, **kwargs: Iterable[str]) -> "MixedPolicyScope":
        """``MixedPolicyScope.of({"X1": ["C"]})`` or ``MixedPolicyScope.of(X1=["C"])``."""
        items = dict(mapping or {}, **kwargs)
        return cls(frozenset(ScopePair(x, frozenset(cs)) for x, cs in items.items()))

    @cached_property
    def key(self) -> tuple[tuple[str, tuple[str, ...]], ...]:
        return tuple(sorted(p.key for p in self.pairs))

    @property
    def interventions(self) -> tuple[str, ...]:
        """X(S), sorted."""
        return tuple(sorted(p.intervened for p in self.pairs))

    @property
    def contexts(self) -> tuple[str, ...]:
        """C(S): union of all pairs' contexts, sorted."""
        return tuple(sorted(set().union(*(p.contexts for p in self.pairs))))

    def contexts_of(self, x: str) -> frozenset[str]:
        for p in self.pairs:
            if p.intervened == x:
                return p.contexts
        raise KeyError(x)

    @property
    def is_passive(self) -> bool:
        return not self.pairs

    @property
    def name(self) -> str:
        if not self.pairs:
            return "<>"
        return " ".join(str(ScopePair(x, frozenset(cs))) for x, cs in self.key)

    def __str__(self) -> str:
        return self.name

    def __lt__(self, other: "MixedPolicyScope") -> bool:
        return self.key < other.key


@dataclass(frozen=True)
class ScopeSet:
    """Canonically ordered, duplicate-free collection of scopes."""

    scopes: tuple[MixedPolicyScope, ...]
    origin: str = "user"

    def __post_init__(self) -> None:
        if self.origin not in ORIGINS:
            raise ScopeError(f"unknown origin {self.origin!r}")
        if len(set(self.scopes)) != len(self.scopes):
            raise ScopeError("duplicate scopes in scope set")
        object.__setattr__(self, "scopes", tuple(sorted(self.scopes, key=lambda s: s.key)))

    def __len__(self) -> int:
        return len(self.scopes)

    def __iter__(self) -> Iterator[MixedPolicyScope]:
        return iter(self.scopes)

    def __getitem__(self, i: int) -> MixedPolicyScope:
        return self.scopes[i]

    def __contains__(self, s: object) -> bool:
        return s in self.scopes

    def index(self, s: MixedPolicyScope) -> int:
        return self.scopes.index(s)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.scopes]


def validate_mps(g: CausalGraph, s: MixedPolicyScope) -> bool:
    """Whether ``s`` is a mixed policy scope for ``g``.

    Unknown variable names raise :class:`GraphError`; everything else is a
    plain ``False``.
    """
    for p in s.pairs:
        g.check(p.intervened, *p.contexts)
    for p in s.pairs:
        if g.kinds[p.intervened] is not Kind.MANIPULABLE:
            return False
        if g.target in p.contexts:
            return False
    return is_acyclic(mutilate(g, s))


def subsumes(s: MixedPolicyScope, s2: MixedPolicyScope) -> bool:
    """True iff ``s`` controls every variable of ``s2`` with at least its contexts."""
    mine = {p.intervened: p.contexts for p in s.pairs}
    for p in s2.pairs:
        if p.intervened not in mine or not p.contexts <= mine[p.intervened]:
            return False
    return True


def _context_free(s: MixedPolicyScope) -> MixedPolicyScope:
    return MixedPolicyScope(frozenset(ScopePair(p.intervened) for p in s.pairs))


def _prune_step(g: CausalGraph, s: MixedPolicyScope) -> MixedPolicyScope:
    reach_y = ancestors(mutilate(g, s), [g.target])
    kept = [p for p in s.pairs if p.intervened in reach_y]
    if not kept:
        return MixedPolicyScope()
    bare = mutilate(g, MixedPolicyScope(frozenset(ScopePair(p.intervened) for p in kept)))
    relevant = ancestors(bare, [g.target, *(p.intervened for p in kept)])
    return MixedPolicyScope(frozenset(ScopePair(p.intervened, p.contexts & relevant) for p in kept))


def prune_redundant(g: CausalGraph, s: MixedPolicyScope) -> MixedPolicyScope:
    """Drop interventions without causal influence on the target and idle contexts.

    A pair is dropped when its variable has no directed path to the target in
    the mutilated graph.  A context is dropped when it is neither an ancestor
    of the target nor of a kept intervention once the kept interventions'
    incoming edges are cut (context edges themselves do not count, otherwise
    every context would trivially qualify).  Repeats until a fixed point.
    """
    current = s
    while True:
        nxt = _prune_step(g, current)
        if nxt == current:
            return current
        if not validate_mps(g, nxt):
            # restoring a dropped variable's parents closed a cycle; keep last valid
            return current
        current = nxt


def _candidate_contexts(
    g_bar: CausalGraph, target: str, intervened: frozenset[str], screen: bool
) -> list[str]:
    observed = [
        n for n in g_bar.names if n != target and n not in intervened and g_bar.kinds[n] is not Kind.TARGET
    ]
    # a joint policy reads every context before acting, so none may sit downstream of any intervention
    downstream = descendants(g_bar, intervened)
    relevant = ancestors(g_bar, [target])
    cands = [c for c in observed if c not in downstream and c in relevant]
    if not screen or not cands:
        return cands
    marginal = m_connected(g_bar, target, intervened)
    full = m_connected(g_bar, target, intervened | set(cands))
    return [c for c in cands if c in marginal and c in full]


def enumerate_scopes(
    g: CausalGraph,
    max_context: int = 2,
    max_interventions: int | None = 2,
    screen: bool = True,
) -> ScopeSet:
    """Conservatively enumerate candidate scopes for ``g``.

    Intervention sets are drawn from the manipulable ancestors of the target
    (at most ``max_interventions`` variables, ``None`` for no cap) and kept
    only when every member still reaches the target after its incoming edges
    are cut.  Each intervened variable takes up to ``max_context`` contexts
    from the observed non-target variables that are upstream of the target
    and not downstream of any variable in the intervention set.

    With ``screen`` on, a context candidate must also be m-connected to the
    target given the intervention set, both on its own and with every other
    candidate observed.  This discards variables whose information is
    entirely carried by closer observations (e.g. long chains feeding into an
    observed mediator) and keeps enumeration tractable on wide graphs.

    Multi-variable scopes are validated for acyclicity.  Generated scopes are
    already fixed points of :func:`prune_redundant` (every intervened variable
    reaches the target once the set's incoming edges are cut, and contexts are
    drawn from the target's ancestors in that graph), so no separate pruning
    pass is needed.  The result may still contain scopes that are not
    possibly optimal.
    """
    if max_context < 0:
        raise ScopeError("max_context must be >= 0")
    target = g.target
    anc_y = ancestors(g, [target])
    cand_x = [x for x in g.manipulable if x in anc_y]
    top = len(cand_x) if max_interventions is None else min(max_interventions, len(cand_x))
    found: set[MixedPolicyScope] = {MixedPolicyScope()}
    for k in range(1, top + 1):
        for combo in itertools.combinations(cand_x, k):
            ivs = frozenset(combo)
            g_bar = mutilate(g, MixedPolicyScope.of({x: () for x in combo}))
            anc_bar = ancestors(g_bar, [target])
            if not ivs <= anc_bar:
                continue
            cands = _candidate_contexts(g_bar, target, ivs, screen)
            subsets = [
                frozenset(c) for r in range(min(max_context, len(cands)) + 1) for c in itertools.combinations(cands, r)
            ]
            options = [[ScopePair(x, cs) for cs in subsets] for x in combo]
            for pairs in itertools.product(*options):
                s = MixedPolicyScope(frozenset(pairs))
                if k > 1 and not is_acyclic(mutilate(g, s)):
                    continue
                found.add(s)
    logger.info("enumerated %d candidate scopes", len(found))
    return ScopeSet(tuple(found), origin="enumerated")


# -- scope file format -------------------------------------------------------


def parse_scopes(text: str, origin: str = "user") -> ScopeSet:
    """Parse scope blocks.

    Each block starts with a ``scope`` line (anything after the keyword is a
    free-form label) followed by ``pair <X> | <C1>,<C2>,...`` lines; a bare
    ``|`` means no contexts.  A ``scope`` line with no pairs is the passive
    scope.  Pair lines may carry a policy rule after ``=``, which is ignored
    here (see :func:`cocabo.scm.parse_policy`).
    """
    return ScopeSet(tuple(s for s, _ in _parse_blocks(text)), origin=origin)


def _parse_blocks(text: str) -> list[tuple[MixedPolicyScope, dict[str, str]]]:
    blocks: list[tuple[list[ScopePair], dict[str, str]]] = []
    current: tuple[list[ScopePair], dict[str, str]] | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        if head == "scope":
            current = ([], {})
            blocks.append(current)
            continue
        if head != "pair":
            raise ScopeError(f"line {lineno}: expected 'scope' or 'pair', got {raw.strip()!r}")
        if current is None:
            current = ([], {})
            blocks.append(current)
        body, eq, rule = rest.partition("=")
        x, bar, ctx = body.partition("|")
        x = x.strip()
        if not bar or not x or " " in x:
            raise ScopeError(f"line {lineno}: malformed pair {raw.strip()!r}")
        contexts = [c.strip() for c in ctx.split(",") if c.strip()]
        try:
            current[0].append(ScopePair(x, frozenset(contexts)))
        except ScopeError as exc:
            raise ScopeError(f"line {lineno}: {exc}") from None
        if eq:
            current[1][x] = rule.strip()
    return [(MixedPolicyScope(frozenset(pairs)), rules) for pairs, rules in blocks]


def serialize_scopes(scopes: Iterable[MixedPolicyScope]) -> str:
    out = []
    for s in scopes:
        out.append("scope")
        for x, cs in s.key:
            out.append(f"pair {x} | {','.join(cs)}".rstrip())
        out.append("")
    return "\n".join(out)


# -- fixtures ------------------------------------------------------------------

FIXTURES = {
    "toy_pomps": "toy",
    "toy_pomis": "toy",
    "psa_pomps": "psa",
    "psa_pomis": "psa",
    "large_pomps": "large",
    "fig4_pomps": "fig4",
}
"""Fixture name -> name of the graph it belongs to (see :func:`cocabo.benchmarks.builtin_graph`)."""


def load_fixture(name: str) -> ScopeSet:
    if name not in FIXTURES:
        raise ScopeError(f"unknown fixture {name!r}; known: {', '.join(sorted(FIXTURES))}")
    text = resources.files("cocabo.data").joinpath(f"{name}.scopes").read_text(encoding="utf-8")
    return parse_scopes(text, origin="fixture")
