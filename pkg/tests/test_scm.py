from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from cocabo.benchmarks import BENCHMARKS, builtin, builtin_graph
from cocabo.scm import (
    DomainSpec,
    Policy,
    PolicyOrderError,
    ScmSyntaxError,
    estimate_expectation,
    parse_expression,
    parse_policy,
    parse_scm,
    sample,
    simulate,
)
from cocabo.scm.expr import evaluate
from cocabo.scopes import MixedPolicyScope

S = MixedPolicyScope.of

# (1/3) * E[exp(-4 U^2)] for U ~ uniform(-1, 1), in closed form
TOY_PASSIVE_MEAN = math.sqrt(math.pi) / 4.0 * math.erf(2.0) / 3.0


@pytest.fixture(scope="module")
def toy():
    return builtin("toy").scm


def test_toy_passive_constant_matches_quadrature():
    val, _ = integrate.quad(lambda u: math.exp(-4 * u * u) / 2.0, -1, 1)
    assert val / 3.0 == pytest.approx(TOY_PASSIVE_MEAN, abs=1e-12)
    assert TOY_PASSIVE_MEAN == pytest.approx(0.1470, abs=5e-5)


# -- parsing ------------------------------------------------------------------------

COBO_LISTING = """\
exo U1 ~ uniform(-1, 1)
exo U2 ~ uniform(-1, 1)
C = U1 + normal(0, 0.1)
X1 = U1 + normal(0, 0.1)
X2 = abs(C - X1) + 0.2 * U2
Y = cos(C - X2) + 0.1 * U2 + normal(0, 0.1)
domain X2 [-1, 1]
target Y
"""


def test_parse_four_equation_scm():
    scm = parse_scm(COBO_LISTING)
    assert scm.endogenous == ("C", "X1", "X2", "Y")
    assert scm.parents("X2") == frozenset({"C", "X1"})
    assert scm.exogenous_parents("Y") == frozenset({"U2"})


def test_constant_scm():
    scm = parse_scm("Y = 1\ntarget Y\n")
    r = sample(scm, Policy.passive(), np.random.default_rng(0))
    assert r.target_value == 1.0 and r.values == {"Y": 1.0}


@pytest.mark.parametrize(
    "text,line,col",
    [
        ("Y = Y + 1\ntarget Y\n", 1, 5),
        ("X = 1\nY = Z\ntarget Y\n", 2, 5),
        ("Y = X\nX = 1\ntarget Y\n", 1, 5),
        ("Y = 1\nY = 2\ntarget Y\n", 2, 1),
        ("Y = 1 +\ntarget Y\n", 1, None),
        ("exo U ~ gamma(1, 2)\nY = U\ntarget Y\n", 1, None),
        ("Y = 1\n", 0, None),
        ("Y = 1\ndomain Y [1, 0]\ntarget Y\n", 2, None),
        ("Y = 1\ndomain Q [0, 1]\ntarget Y\n", 0, None),
        ("Y = foo(1)\ntarget Y\n", 1, None),
    ],
)
def test_parse_errors_carry_position(text, line, col):
    with pytest.raises(ScmSyntaxError) as info:
        parse_scm(text)
    assert info.value.line == line
    if col is not None:
        assert info.value.column == col


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_induced_graph_matches_builtin_graph(name):
    b = builtin(name)
    assert b.scm.induced_graph(b.graph.manipulable) == b.graph


def test_expression_evaluation():
    e = parse_expression("2 * pow(x, 2) - abs(-3) + sigmoid(x) / 2 - -cos(x) * exp(x)")
    x = np.array([0.0, 2.0])
    expected = 2 * x**2 - 3 + 1 / (1 + np.exp(-x)) / 2 + np.cos(x) * np.exp(x)
    np.testing.assert_allclose(evaluate(e, {"x": x}, np.random.default_rng(0), 2), expected, rtol=1e-14)


# -- domains ------------------------------------------------------------------------


def test_domain_clip():
    d = DomainSpec(-1.0, 1.0)
    np.testing.assert_array_equal(d.clip(np.array([-3.0, 0.2, 5.0])), [-1.0, 0.2, 1.0])
    dd = DomainSpec(values=(0.0, 1.0, 2.0))
    np.testing.assert_array_equal(dd.clip(np.array([0.4, 0.6, 7.0])), [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        DomainSpec(1.0, 0.0)


# -- simulation ---------------------------------------------------------------------


def test_fixing_x2_zero_gives_y_equal_c(toy):
    values, _ = simulate(toy, Policy.constant({"X2": 0.0}), 1000, np.random.default_rng(1))
    np.testing.assert_array_equal(values["Y"], values["C"])


def test_toy_expectations(toy):
    rng = np.random.default_rng(7)
    mean, se = estimate_expectation(toy, Policy.passive(), 10**6, rng)
    assert abs(mean - TOY_PASSIVE_MEAN) < 0.005
    mean, _ = estimate_expectation(toy, builtin("toy").optimal_policy, 10**6, rng)
    assert abs(mean - 1.0 / 3.0) < 0.005
    fix_x2 = Policy.per_pair(S(X2=["C"]), {"X2": lambda ctx: np.sin(3 * ctx["C"])})
    mean, _ = estimate_expectation(toy, fix_x2, 10**6, rng)
    assert abs(mean) < 0.005


def test_passive_sample_means_match_analytic_values(toy):
    values, _ = simulate(toy, Policy.passive(), 10**5, np.random.default_rng(3))
    # X1 = C = U1 has mean 0; E[X2] = E[U2] * E[exp(-4 U1^2)] = 0
    for name, expected in (("X1", 0.0), ("C", 0.0), ("X2", 0.0), ("Y", TOY_PASSIVE_MEAN)):
        x = values[name]
        assert abs(x.mean() - expected) < 3 * x.std(ddof=1) / math.sqrt(len(x))


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_optimal_policies_attain_stated_optimum(name):
    b = builtin(name)
    mean, se = estimate_expectation(b.scm, b.optimal_policy, 10**6, np.random.default_rng(11))
    assert abs(mean - b.mu_star) <= max(3 * se, 1e-9), (mean, se)


def test_psa_heterogeneous_optimum_is_zero():
    b = builtin("psa_heterogeneous")
    mean, _ = estimate_expectation(b.scm, b.optimal_policy, 10**5, np.random.default_rng(0))
    assert mean <= 0.02


def test_psa_homogeneous_constant_by_quadrature():
    # PSA under do(Aspirin=0, Statin=1): noise, drugs and Cancer averaged over Age and the BMI noise
    from scipy.special import expit

    def integrand(bmi_noise, age):
        bmi = 27 - 0.01 * age + bmi_noise
        cancer = expit(2.2 - 0.05 * age + 0.01 * bmi - 0.04)
        dens = math.exp(-0.5 * (bmi_noise / 0.7) ** 2) / (0.7 * math.sqrt(2 * math.pi)) / 20.0
        return (6.8 + 0.04 * age - 0.15 * bmi - 0.6 + cancer) * dens

    val, _ = integrate.dblquad(integrand, 55, 75, -7.0, 7.0)
    assert val == pytest.approx(builtin("psa_homogeneous").mu_star, abs=1e-6)


def test_standard_error_scales_with_inverse_root_n(toy):
    _, se1 = estimate_expectation(toy, Policy.passive(), 40_000, np.random.default_rng(0))
    _, se4 = estimate_expectation(toy, Policy.passive(), 160_000, np.random.default_rng(1))
    assert se1 / se4 == pytest.approx(2.0, rel=0.05)


def test_sampling_is_deterministic(toy):
    pol = builtin("toy").optimal_policy
    a = [sample(toy, pol, rng) for rng in [np.random.default_rng(5)] for _ in range(20)]
    b = [sample(toy, pol, rng) for rng in [np.random.default_rng(5)] for _ in range(20)]
    assert a == b


@settings(max_examples=50, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_interventions_stay_in_domain(a, b):
    toy = builtin("toy").scm
    pol = Policy.per_pair(S(X1=["C"], X2=["C"]), {"X1": lambda ctx: a * ctx["C"], "X2": lambda ctx: b + ctx["C"]})
    values, clipped = simulate(toy, pol, 200, np.random.default_rng(0))
    for x in ("X1", "X2"):
        assert values[x].min() >= -1.0 and values[x].max() <= 1.0
    assert set(clipped) <= {"X1", "X2"}


def test_policy_reading_downstream_context_is_rejected(toy):
    pol = Policy.per_pair(S(X2=["Y"]), {"X2": lambda ctx: ctx["Y"]})
    with pytest.raises(PolicyOrderError):
        simulate(toy, pol, 1, np.random.default_rng(0))


def test_joint_rule_sees_all_contexts():
    b = builtin("psa_heterogeneous")
    seen = {}

    def rule(ctx):
        seen.update(ctx)
        return {"Aspirin": 0.0 * ctx["Age"], "Statin": 0.0 * ctx["BMI"]}

    scope = S(Aspirin=["Age", "BMI"], Statin=["Age", "BMI"])
    simulate(b.scm, Policy.joint(scope, rule), 10, np.random.default_rng(0))
    assert set(seen) == {"Age", "BMI"}


def test_policy_file_rules():
    pol = parse_policy("scope\npair X1 | C = -C\n")
    assert pol.scope == S(X1=["C"])
    with pytest.raises(ValueError):
        parse_policy("scope\npair X1 | C = X2\n")
    assert parse_policy("").scope.is_passive


def test_large_system_graph_shape():
    g = builtin_graph("large")
    assert len([v for v in g.names if v.startswith("Xt")]) == 27
    assert len([v for v in g.names if v.startswith("Ct")]) == 50
