"""Builtin benchmark systems with known optima.

Each benchmark bundles a causal graph, a simulator written in the SCM
language, the optimal expected target value and a policy that attains it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .graph import CausalGraph, parse_graph
from .scm import Policy, Scm, parse_scm
from .scopes import MixedPolicyScope

__all__ = ["Benchmark", "BENCHMARKS", "GRAPHS", "builtin", "builtin_graph", "builtin_scm_text"]


TOY_GRAPH = """\
var X1 manipulable
var X2 manipulable
var C context
var Y target
edge X1 -> X2
edge X2 -> Y
edge C -> X2
edge C -> Y
confound X1 <-> C
confound X2 <-> Y
"""

# Age and BMI also feed Cancer: both listed simulators use them in its equation.
PSA_GRAPH = """\
var Age context
var BMI context
var Aspirin manipulable
var Statin manipulable
var Cancer context
var PSA target
edge Age -> BMI
edge Age -> Aspirin
edge BMI -> Aspirin
edge Age -> Statin
edge BMI -> Statin
edge Aspirin -> Cancer
edge Statin -> Cancer
edge Age -> Cancer
edge BMI -> Cancer
edge Aspirin -> PSA
edge Statin -> PSA
edge Cancer -> PSA
edge Age -> PSA
edge BMI -> PSA
"""

FIG4_GRAPH = """\
var X1 manipulable
var X2 manipulable
var Y target
edge X1 -> Y
edge X2 -> Y
confound X1 <-> Y
"""

N_CT = 50
N_XT = 27


def _large_graph_text() -> str:
    lines = ["var C0 context"]
    lines += [f"var C{i} context" for i in range(1, 7)]
    lines += [f"var Ct{i} context" for i in range(1, N_CT + 1)]
    lines += ["var X1 manipulable", "var X2 manipulable"]
    lines += [f"var Xt{j} manipulable" for j in range(1, N_XT + 1)]
    lines.append("var Y target")
    chain = ["C0", "C1", "C2", "C3", "C4", "C5", "C6"]
    lines += [f"edge {a} -> {b}" for a, b in zip(chain, chain[1:])]
    lines += [f"edge Ct{i} -> Xt{j}" for i in range(1, N_CT + 1) for j in range(1, N_XT + 1)]
    lines += [f"edge Xt{j} -> C5" for j in range(1, N_XT + 1)]
    lines += ["edge C1 -> X2", "edge C6 -> X2", "edge X1 -> X2", "edge X2 -> Y", "edge C1 -> Y"]
    lines += ["confound X1 <-> C1", "confound X2 <-> Y"]
    return "\n".join(lines) + "\n"


TOY_SCM = """\
exo U1 ~ uniform(-1, 1)
exo U2 ~ uniform(-1, 1)
X1 = U1
C = U1
X2 = U2 * exp(-pow(X1 + C, 2))
Y = U2 * X2 + C
domain X1 [-1, 1]
domain X2 [-1, 1]
target Y
"""

PSA_HOMOGENEOUS_SCM = """\
Age = uniform(55, 75)
BMI = normal(27 - 0.01 * Age, 0.7)
Aspirin = sigmoid(-8 + 0.1 * Age + 0.03 * BMI)
Statin = sigmoid(-13 + 0.1 * Age + 0.2 * BMI)
Cancer = sigmoid(2.2 - 0.05 * Age + 0.01 * BMI - 0.04 * Statin + 0.02 * Aspirin)
PSA = normal(0, 0.4) + 6.8 + 0.04 * Age - 0.15 * BMI - 0.6 * Statin + 0.55 * Aspirin + Cancer
domain Aspirin [0, 1]
domain Statin [0, 1]
target PSA
"""

# Cancer enters PSA additively; that is what makes PSA reduce to
# (A - k)^2 + (S - k)^2 + noise with k = ((Age - 55) / 21) * |(BMI - 27) / 4|.
PSA_HETEROGENEOUS_SCM = """\
Age = uniform(55, 75)
BMI = normal(27 - 0.01 * Age, 0.1)
Aspirin = sigmoid(-8 + 0.1 * Age + 0.03 * BMI)
Statin = sigmoid(-13 + 0.1 * Age + 0.2 * BMI)
Cancer = pow(Statin, 2) + pow((Age - 55) / 21, 2) * pow(abs((BMI - 27) / 4), 2) + pow(Aspirin, 2) / 2
PSA = normal(0, 0.01) + Cancer + pow(Aspirin, 2) / 2 + pow((Age - 55) / 21, 2) * pow(abs((BMI - 27) / 4), 2) - 2 * ((Age - 55) / 21) * (Aspirin + Statin) * abs((BMI - 27) / 4)
domain Aspirin [0, 1]
domain Statin [0, 1]
target PSA
"""

COBO_FAVORABLE_SCM = """\
exo U1 ~ uniform(-1, 1)
exo U2 ~ uniform(-1, 1)
C = U1 + normal(0, 0.1)
X1 = U1 + normal(0, 0.1)
X2 = abs(C - X1) + 0.2 * U2
Y = cos(C - X2) + 0.1 * U2 + 0.1 * normal(0, 0.1)
domain X1 [-2, 2]
domain X2 [-2, 2]
target Y
"""


def _large_scm_text() -> str:
    ct_mean = "(" + " + ".join(f"Ct{i}" for i in range(1, N_CT + 1)) + f") / {N_CT}"
    xt_mean = "(" + " + ".join(f"Xt{j}" for j in range(1, N_XT + 1)) + f") / {N_XT}"
    lines = [
        "exo U1 ~ uniform(-1, 1)",
        "exo U2 ~ uniform(-1, 1)",
        "C0 = normal(0, 0.2)",
        "X1 = normal(U1, 0.1)",
        "C1 = normal(C0 - U1, 0.1)",
        "C2 = normal(C1, 0.1)",
        "C3 = normal(C2, 0.1)",
        "C4 = normal(C3, 0.1)",
    ]
    lines += [f"Ct{i} = normal(0, 0.2)" for i in range(1, N_CT + 1)]
    lines += [f"Xt{j} = uniform(-1, 1 + 0.1 * {ct_mean})" for j in range(1, N_XT + 1)]
    lines += [
        f"C5 = normal(C4 + 0.01 * {xt_mean}, 0.1)",
        "C6 = normal(C5, 0.1)",
        "X2 = normal(0.5 * (C1 + C6) + X1 + 0.3 * abs(U2), 0.1)",
        "Y = normal(cos(C1 - X2) + 0.1 * U2, 0.01)",
        "domain X1 [-2, 2]",
        "domain X2 [-2, 2]",
    ]
    lines += [f"domain Xt{j} [-2, 2]" for j in range(1, N_XT + 1)]
    lines.append("target Y")
    return "\n".join(lines) + "\n"


GRAPHS = {
    "toy": lambda: TOY_GRAPH,
    "psa": lambda: PSA_GRAPH,
    "large": _large_graph_text,
    "fig4": lambda: FIG4_GRAPH,
}


@lru_cache(maxsize=None)
def builtin_graph(name: str) -> CausalGraph:
    if name not in GRAPHS:
        raise KeyError(f"unknown builtin graph {name!r}; known: {', '.join(sorted(GRAPHS))}")
    return parse_graph(GRAPHS[name]())


@dataclass(frozen=True)
class Benchmark:
    name: str
    graph_name: str
    scm: Scm
    mu_star: float
    objective: str
    optimal_policy: Policy
    optimal_description: str
    pomps_fixture: str
    pomis_fixture: str | None = None

    @property
    def graph(self) -> CausalGraph:
        return builtin_graph(self.graph_name)

    @property
    def maximise(self) -> bool:
        return self.objective == "maximise"


def _psa_k(ctx):
    return (ctx["Age"] - 55.0) / 21.0 * np.abs((ctx["BMI"] - 27.0) / 4.0)


# E[PSA | do(Aspirin=0, Statin=1)] integrated over Age and BMI with adaptive quadrature
PSA_HOMOGENEOUS_OPTIMUM = 5.1552870184267725


def _toy() -> Benchmark:
    scope = MixedPolicyScope.of(X1=["C"])
    return Benchmark(
        "toy", "toy", parse_scm(TOY_SCM), 1.0 / 3.0, "maximise",
        Policy.per_pair(scope, {"X1": lambda ctx: -ctx["C"]}),
        "X1 = -C under <X1|C>", "toy_pomps", "toy_pomis",
    )


def _psa_homogeneous() -> Benchmark:
    return Benchmark(
        "psa_homogeneous", "psa", parse_scm(PSA_HOMOGENEOUS_SCM), PSA_HOMOGENEOUS_OPTIMUM, "minimise",
        Policy.constant({"Aspirin": 0.0, "Statin": 1.0}),
        "Aspirin = 0, Statin = 1 for every Age and BMI", "psa_pomps", "psa_pomis",
    )


def _psa_heterogeneous() -> Benchmark:
    scope = MixedPolicyScope.of(Aspirin=["Age", "BMI"], Statin=["Age", "BMI"])
    return Benchmark(
        "psa_heterogeneous", "psa", parse_scm(PSA_HETEROGENEOUS_SCM), 0.0, "minimise",
        Policy.per_pair(scope, {"Aspirin": _psa_k, "Statin": _psa_k}),
        "Aspirin = Statin = ((Age - 55) / 21) * |(BMI - 27) / 4|", "psa_pomps", "psa_pomis",
    )


def _cobo_favorable() -> Benchmark:
    scope = MixedPolicyScope.of(X2=["C"])
    return Benchmark(
        "cobo_favorable", "toy", parse_scm(COBO_FAVORABLE_SCM), 1.0, "maximise",
        Policy.per_pair(scope, {"X2": lambda ctx: ctx["C"]}),
        "X2 = C under <X2|C>", "toy_pomps", "toy_pomis",
    )


def _large_system() -> Benchmark:
    scope = MixedPolicyScope.of(X2=["C1"])
    return Benchmark(
        "large_system", "large", parse_scm(_large_scm_text()), 1.0, "maximise",
        Policy.per_pair(scope, {"X2": lambda ctx: ctx["C1"]}),
        "X2 = C1 under <X2|C1>", "large_pomps",
    )


BENCHMARKS = {
    "toy": _toy,
    "psa_homogeneous": _psa_homogeneous,
    "psa_heterogeneous": _psa_heterogeneous,
    "cobo_favorable": _cobo_favorable,
    "large_system": _large_system,
}


@lru_cache(maxsize=None)
def builtin(name: str) -> Benchmark:
    if name not in BENCHMARKS:
        raise KeyError(f"unknown benchmark {name!r}; known: {', '.join(sorted(BENCHMARKS))}")
    return BENCHMARKS[name]()


def builtin_scm_text(name: str) -> str:
    """SCM source of a builtin benchmark."""
    texts = {
        "toy": TOY_SCM,
        "psa_homogeneous": PSA_HOMOGENEOUS_SCM,
        "psa_heterogeneous": PSA_HETEROGENEOUS_SCM,
        "cobo_favorable": COBO_FAVORABLE_SCM,
    }
    if name == "large_system":
        return _large_scm_text()
    if name not in texts:
        raise KeyError(f"unknown benchmark {name!r}")
    return texts[name]
