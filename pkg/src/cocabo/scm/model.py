"""Structural causal models, mixed policies and simulation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np

from ..graph import CausalGraph, Kind, Variable, is_acyclic, mutilate, topological_order
from ..scopes import MixedPolicyScope, ScopePair, _parse_blocks
from .expr import Expr, Num, Neg, ScmSyntaxError, evaluate, parse_expression, references

__all__ = [
    "ExogenousSpec",
    "DomainSpec",
    "Scm",
    "Policy",
    "PolicyOrderError",
    "Record",
    "parse_scm",
    "parse_policy",
    "simulate",
    "sample",
    "estimate_expectation",
]


class PolicyOrderError(ValueError):
    """A policy reads a context that can only be realised after one of its interventions."""


@dataclass(frozen=True)
class ExogenousSpec:
    name: str
    distribution: str
    a: float
    b: float

    def __post_init__(self) -> None:
        if self.distribution == "uniform" and not self.a < self.b:
            raise ValueError(f"exogenous {self.name}: uniform needs lo < hi")
        if self.distribution == "normal" and not self.b > 0:
            raise ValueError(f"exogenous {self.name}: normal needs sd > 0")
        if self.distribution not in ("uniform", "normal"):
            raise ValueError(f"exogenous {self.name}: unknown distribution {self.distribution!r}")

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.distribution == "uniform":
            return self.a + (self.b - self.a) * rng.random(n)
        return self.a + self.b * rng.standard_normal(n)


@dataclass(frozen=True)
class DomainSpec:
    """Continuous box ``[lo, hi]`` or a finite list of values."""

    lo: float = 0.0
    hi: float = 1.0
    values: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.values is not None:
            if not self.values:
                raise ValueError("discrete domain needs at least one value")
            vals = tuple(sorted(float(v) for v in self.values))
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "lo", vals[0])
            object.__setattr__(self, "hi", vals[-1])
        elif not self.lo < self.hi:
            raise ValueError("continuous domain needs lo < hi")

    @property
    def discrete(self) -> bool:
        return self.values is not None

    @property
    def width(self) -> float:
        return self.hi - self.lo if self.hi > self.lo else 1.0

    def clip(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.values is None:
            return np.clip(x, self.lo, self.hi)
        vals = np.asarray(self.values)
        idx = np.abs(x[..., None] - vals).argmin(axis=-1)
        return vals[idx]

    def __str__(self) -> str:
        if self.values is not None:
            return "{" + ", ".join(repr(v) for v in self.values) + "}"
        return f"[{self.lo!r}, {self.hi!r}]"


@dataclass(frozen=True)
class Scm:
    exogenous: tuple[ExogenousSpec, ...]
    equations: tuple[tuple[str, Expr], ...]
    domains: Mapping[str, DomainSpec]
    target: str

    @cached_property
    def endogenous(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.equations)

    @cached_property
    def equation(self) -> dict[str, Expr]:
        return dict(self.equations)

    @cached_property
    def _exo_names(self) -> frozenset[str]:
        return frozenset(u.name for u in self.exogenous)

    def parents(self, v: str) -> frozenset[str]:
        return frozenset(r for r in references(self.equation[v]) if r not in self._exo_names)

    def exogenous_parents(self, v: str) -> frozenset[str]:
        return frozenset(r for r in references(self.equation[v]) if r in self._exo_names)

    def induced_graph(self, manipulable: Sequence[str] | None = None) -> CausalGraph:
        """Graph implied by the equations: parents from references, ``<->`` for shared exogenous inputs.

        ``manipulable`` defaults to the variables with a declared domain.
        """
        manip = set(self.domains if manipulable is None else manipulable)
        kinds = {
            v: Kind.TARGET if v == self.target else Kind.MANIPULABLE if v in manip else Kind.CONTEXT
            for v in self.endogenous
        }
        directed = {(p, v) for v in self.endogenous for p in self.parents(v)}
        bidirected = set()
        for i, a in enumerate(self.endogenous):
            for b in self.endogenous[i + 1 :]:
                if self.exogenous_parents(a) & self.exogenous_parents(b):
                    bidirected.add((a, b))
        return CausalGraph.build(kinds, directed, bidirected)

    @cached_property
    def _skeleton(self) -> CausalGraph:
        # ordering only: kinds are irrelevant apart from the single target
        variables = tuple(Variable(v, Kind.TARGET if v == self.target else Kind.CONTEXT) for v in self.endogenous)
        directed = frozenset((p, v) for v in self.endogenous for p in self.parents(v))
        return CausalGraph(variables, directed)

    def __str__(self) -> str:
        from .expr import format_expression

        lines = [f"exo {u.name} ~ {u.distribution}({u.a!r}, {u.b!r})" for u in self.exogenous]
        lines += [f"{v} = {format_expression(e)}" for v, e in self.equations]
        lines += [f"domain {v} {d}" for v, d in sorted(self.domains.items())]
        lines.append(f"target {self.target}")
        return "\n".join(lines) + "\n"


def _const(e: Expr, line: int, col: int) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Neg):
        return -_const(e.operand, line, col)
    raise ScmSyntaxError("expected a numeric literal", line, col)


def _split_numbers(body: str, line: int, col: int) -> list[float]:
    out = []
    offset = 0
    for piece in body.split(","):
        if not piece.strip():
            raise ScmSyntaxError("empty value", line, col + offset)
        out.append(_const(parse_expression(piece, line, col + offset), line, col))
        offset += len(piece) + 1
    return out


def parse_scm(text: str) -> Scm:
    """Parse the SCM language.

    Statements, one per line (``#`` starts a comment)::

        exo U1 ~ uniform(-1, 1)
        exo E ~ normal(0, 0.1)
        X = U1 + 0.5 * E
        Y = cos(X) + normal(0, 0.01)
        domain X [-1, 1]
        domain D {0, 1, 2}
        target Y

    Equations may only reference exogenous variables and endogenous variables
    defined on earlier lines.
    """
    exo: list[ExogenousSpec] = []
    eqs: list[tuple[str, Expr]] = []
    domains: dict[str, DomainSpec] = {}
    target: str | None = None
    declared: set[str] = set()
    name_re = r"[A-Za-z_][A-Za-z_0-9]*"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        indent = len(line) - len(line.lstrip())
        stripped = line.strip()
        if m := re.fullmatch(rf"exo\s+({name_re})\s*~\s*(\w+)\s*\((.*)\)\s*", stripped):
            name, dist, body = m.groups()
            if name in declared:
                raise ScmSyntaxError(f"{name!r} declared twice", lineno, indent + 1)
            if dist not in ("uniform", "normal"):
                raise ScmSyntaxError(f"unknown distribution {dist!r}", lineno, indent + m.start(2) + 1)
            args = _split_numbers(body, lineno, indent + m.start(3) + 1)
            if len(args) != 2:
                raise ScmSyntaxError(f"{dist}() takes 2 arguments", lineno, indent + m.start(2) + 1)
            try:
                exo.append(ExogenousSpec(name, dist, args[0], args[1]))
            except ValueError as exc:
                raise ScmSyntaxError(str(exc), lineno, indent + 1) from None
            declared.add(name)
        elif m := re.fullmatch(rf"domain\s+({name_re})\s*([\[{{])(.*)([\]}}])\s*", stripped):
            name, open_, body, close = m.groups()
            col = indent + m.start(3) + 1
            vals = _split_numbers(body, lineno, col)
            try:
                if open_ == "[" and close == "]":
                    if len(vals) != 2:
                        raise ScmSyntaxError("continuous domain needs [lo, hi]", lineno, col)
                    domains[name] = DomainSpec(vals[0], vals[1])
                elif open_ == "{" and close == "}":
                    domains[name] = DomainSpec(values=tuple(vals))
                else:
                    raise ScmSyntaxError("mismatched domain brackets", lineno, col)
            except ValueError as exc:
                if isinstance(exc, ScmSyntaxError):
                    raise
                raise ScmSyntaxError(str(exc), lineno, col) from None
        elif m := re.fullmatch(rf"target\s+({name_re})\s*", stripped):
            target = m.group(1)
        elif m := re.fullmatch(rf"({name_re})\s*=(.*)", stripped):
            name, body = m.groups()
            col = indent + m.start(2) + 1 + (len(body) - len(body.lstrip()))
            if name in ("exo", "domain", "target"):
                raise ScmSyntaxError(f"malformed {name} statement", lineno, indent + 1)
            e = parse_expression(body, lineno, indent + m.start(2))
            for ref in references(e):
                if ref == name:
                    raise ScmSyntaxError(f"{name!r} refers to itself", lineno, col)
                if ref not in declared:
                    raise ScmSyntaxError(f"{ref!r} is undeclared or defined later", lineno, col)
            if name in declared:
                raise ScmSyntaxError(f"{name!r} declared twice", lineno, indent + 1)
            eqs.append((name, e))
            declared.add(name)
        else:
            raise ScmSyntaxError(f"cannot parse statement {stripped!r}", lineno, indent + 1)

    endo = {n for n, _ in eqs}
    if target is None:
        raise ScmSyntaxError("missing 'target' statement")
    if target not in endo:
        raise ScmSyntaxError(f"target {target!r} has no equation")
    for d in domains:
        if d not in endo:
            raise ScmSyntaxError(f"domain for unknown endogenous variable {d!r}")
    return Scm(tuple(exo), tuple(eqs), domains, target)


# -- policies --------------------------------------------------------------------

ContextMap = Mapping[str, np.ndarray]
JointRule = Callable[[ContextMap], Mapping[str, "np.ndarray | float"]]
PairRule = Callable[[ContextMap], "np.ndarray | float"]


@dataclass(frozen=True)
class Policy:
    """A realisation of a mixed policy scope.

    Either one *joint* rule that sees every context of the scope and returns
    all interventions at once, or one rule per pair that sees only that pair's
    contexts.  Rules are vectorised: context arrays in, arrays (or scalars)
    out.
    """

    scope: MixedPolicyScope
    joint_rule: JointRule | None = None
    pair_rules: Mapping[str, PairRule] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.scope.pairs:
            if self.joint_rule is None and set(self.pair_rules) != set(self.scope.interventions):
                raise ValueError("need a joint rule or one rule per intervened variable")

    @classmethod
    def passive(cls) -> "Policy":
        return cls(MixedPolicyScope())

    @classmethod
    def joint(cls, scope: MixedPolicyScope, rule: JointRule) -> "Policy":
        return cls(scope, joint_rule=rule)

    @classmethod
    def per_pair(cls, scope: MixedPolicyScope, rules: Mapping[str, PairRule]) -> "Policy":
        return cls(scope, pair_rules=dict(rules))

    @classmethod
    def constant(cls, values: Mapping[str, float]) -> "Policy":
        scope = MixedPolicyScope.of({x: () for x in values})
        return cls(scope, pair_rules={x: (lambda ctx, v=v: v) for x, v in values.items()})

    @classmethod
    def from_expressions(cls, scope: MixedPolicyScope, exprs: Mapping[str, Expr | str]) -> "Policy":
        """Per-pair rules written in the equation language; each may reference only its own contexts."""
        rules: dict[str, PairRule] = {}
        for x in scope.interventions:
            if x not in exprs:
                raise ValueError(f"no rule for intervened variable {x!r}")
            e = exprs[x]
            e = parse_expression(e) if isinstance(e, str) else e
            allowed = scope.contexts_of(x)
            for ref in references(e):
                if ref not in allowed:
                    raise ValueError(f"rule for {x!r} reads {ref!r}, which is not among its contexts")
            rules[x] = _expr_rule(e)
        return cls(scope, pair_rules=rules)

    @property
    def decision_scope(self) -> MixedPolicyScope:
        """Scope whose mutilated graph fixes the evaluation order.

        A joint rule needs every context before any intervention, so each
        intervened variable is treated as reading all of C(S).
        """
        if self.joint_rule is None:
            return self.scope
        cs = frozenset(self.scope.contexts)
        return MixedPolicyScope(frozenset(ScopePair(x, cs - {x}) for x in self.scope.interventions))


def _expr_rule(e: Expr) -> PairRule:
    def rule(ctx: ContextMap) -> np.ndarray:
        n = len(next(iter(ctx.values()))) if ctx else 1
        # rules are deterministic: a throwaway generator keeps noise-free expressions honest
        return evaluate(e, ctx, np.random.default_rng(0), n)

    return rule


def parse_policy(text: str) -> Policy:
    """Single-scope policy from the scope file format with ``= <expression>`` rules per pair."""
    blocks = _parse_blocks(text)
    if len(blocks) > 1:
        raise ValueError("a policy file holds exactly one scope")
    if not blocks:
        return Policy.passive()
    scope, rules = blocks[0]
    if not scope.pairs:
        return Policy.passive()
    return Policy.from_expressions(scope, rules)


# -- simulation --------------------------------------------------------------------


@dataclass(frozen=True)
class Record:
    values: dict[str, float]
    intervention: dict[str, float]
    context: dict[str, float]
    target_value: float
    scope_id: int | None = None
    clipped: tuple[str, ...] = ()


def _order(scm: Scm, policy: Policy) -> list[str]:
    if policy.scope.is_passive:
        return list(scm.endogenous)
    skel = scm._skeleton
    dscope = policy.decision_scope
    for name in (*dscope.interventions, *dscope.contexts):
        if name not in scm.equation:
            raise ValueError(f"policy refers to {name!r}, which is not an endogenous variable")
    for x in dscope.interventions:
        if x not in scm.domains:
            raise ValueError(f"intervened variable {x!r} has no domain")
    g = mutilate(skel, dscope)
    if not is_acyclic(g):
        raise PolicyOrderError(
            f"scope {policy.scope} reads a context downstream of one of its own interventions"
        )
    return topological_order(g)


def simulate(
    scm: Scm, policy: Policy, n: int, rng: np.random.Generator
) -> tuple[dict[str, np.ndarray], tuple[str, ...]]:
    """Draw ``n`` joint samples of the endogenous variables under ``policy``.

    Exogenous variables are drawn first, in declaration order; endogenous
    variables are then computed in the topological order of the mutilated
    graph.  Intervened variables are set by the policy from the contexts
    realised so far and clipped to their domain.  Returns the values and the
    names of intervened variables whose policy output was clipped.
    """
    env: dict[str, np.ndarray] = {u.name: u.draw(rng, n) for u in scm.exogenous}
    intervened = set(policy.scope.interventions)
    clipped: list[str] = []
    joint_done = False

    def assign(x: str, raw: np.ndarray | float) -> None:
        arr = np.broadcast_to(np.asarray(raw, dtype=float), (n,)).copy()
        dom = scm.domains[x]
        out = dom.clip(arr)
        if not np.array_equal(out, arr):
            clipped.append(x)
        env[x] = out

    for v in _order(scm, policy):
        if v not in intervened:
            env[v] = evaluate(scm.equation[v], env, rng, n)
            continue
        if policy.joint_rule is not None:
            if not joint_done:
                ctx = {c: env[c] for c in policy.scope.contexts}
                decided = policy.joint_rule(ctx)
                for x in policy.scope.interventions:
                    assign(x, decided[x])
                joint_done = True
        else:
            ctx = {c: env[c] for c in sorted(policy.scope.contexts_of(v))}
            assign(v, policy.pair_rules[v](ctx))
    values = {v: env[v] for v in scm.endogenous}
    return values, tuple(sorted(set(clipped)))


def sample(scm: Scm, policy: Policy, rng: np.random.Generator) -> Record:
    """One draw from the system under ``policy``."""
    values, clipped = simulate(scm, policy, 1, rng)
    flat = {k: float(v[0]) for k, v in values.items()}
    return Record(
        values=flat,
        intervention={x: flat[x] for x in policy.scope.interventions},
        context={c: flat[c] for c in policy.scope.contexts},
        target_value=flat[scm.target],
        clipped=clipped,
    )


def estimate_expectation(
    scm: Scm, policy: Policy, n: int, rng: np.random.Generator, batch: int = 100_000
) -> tuple[float, float]:
    """Monte Carlo mean of the target under ``policy`` and its standard error."""
    if n < 1:
        raise ValueError("n must be >= 1")
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n:
        m = min(batch, n - done)
        values, _ = simulate(scm, policy, m, rng)
        y = values[scm.target]
        total += float(y.sum())
        total_sq += float(np.dot(y, y))
        done += m
    mean = total / n
    if n == 1:
        return mean, math.inf
    var = max(total_sq / n - mean * mean, 0.0) * n / (n - 1)
    return mean, math.sqrt(var / n)
