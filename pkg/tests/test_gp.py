from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cocabo.gp import (
    GpError,
    GpHyperparams,
    GpModel,
    condition,
    fit,
    gram,
    kernel,
    log_marginal_likelihood,
)
from cocabo.gp import _lml_and_grad


def _matern52(r: float) -> float:
    return (1 + math.sqrt(5) * r + 5 * r * r / 3) * math.exp(-math.sqrt(5) * r)


def test_kernel_closed_form_at_unit_distance():
    h = GpHyperparams.default(2)
    assert kernel(h, [0.0, 0.0], [1.0, 0.0]) == pytest.approx((1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5)), abs=1e-12)
    assert kernel(h, [0.0, 0.0], [1.0, 0.0]) == pytest.approx(0.52399, abs=1e-5)


def test_kernel_at_zero_distance_is_signal_variance():
    h = GpHyperparams(np.array([0.3, 2.0]), 2.5, 1e-3)
    assert kernel(h, [0.4, -1.0], [0.4, -1.0]) == 2.5


@settings(max_examples=100, deadline=None)
@given(arrays(float, 3, elements=st.floats(-5, 5)), arrays(float, 3, elements=st.floats(-5, 5)))
def test_kernel_symmetric_and_matches_gram(z, z2):
    h = GpHyperparams(np.array([0.5, 1.0, 2.0]), 1.3, 1e-2)
    assert kernel(h, z, z2) == pytest.approx(kernel(h, z2, z), abs=1e-15)
    assert gram(h, z[None], z2[None])[0, 0] == pytest.approx(kernel(h, z, z2), abs=1e-12)
    r = float(np.sqrt(np.sum(((z - z2) / h.lengthscales) ** 2)))
    assert kernel(h, z, z2) == pytest.approx(1.3 * _matern52(r), abs=1e-12)


def test_single_point_posterior_in_standardised_space():
    # two far-apart points standardise to +1 and -1 and do not interact
    h = GpHyperparams(np.ones(1), 1.0, 1.0)
    m = condition(np.array([[0.0], [1e3]]), np.array([3.0, 1.0]), h)
    mu, var = m.predict(np.array([[0.0]]), standardised=True)
    assert mu[0] == pytest.approx(0.5, abs=1e-12)
    assert var[0] == pytest.approx(0.5, abs=1e-12)


def test_far_query_reverts_to_prior():
    h = GpHyperparams(np.ones(1), 2.0, 1e-2)
    m = condition(np.array([[0.0], [0.5]]), np.array([1.0, 2.0]), h)
    mu, var = m.predict(np.array([[1e4]]), standardised=True)
    assert mu[0] == pytest.approx(0.0, abs=1e-12)
    assert var[0] == pytest.approx(2.0, abs=1e-12)


def _dense_oracle(h: GpHyperparams, x, y, z):
    ys = (y - y.mean()) / y.std()
    k = np.array([[kernel(h, a, b) for b in x] for a in x]) + h.noise_variance * np.eye(len(x))
    ks = np.array([[kernel(h, a, b) for b in z] for a in x])
    mu = ks.T @ np.linalg.solve(k, ys)
    var = np.array([kernel(h, q, q) for q in z]) - np.einsum("ij,ij->j", ks, np.linalg.solve(k, ks))
    return mu, var


def test_posterior_matches_dense_solve_on_random_datasets():
    rng = np.random.default_rng(0)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        x = rng.uniform(-1, 1, (5, d))
        y = rng.normal(size=5)
        z = rng.uniform(-1.5, 1.5, (7, d))
        h = GpHyperparams(rng.uniform(0.2, 2.0, d), float(rng.uniform(0.5, 2.0)), float(rng.uniform(1e-3, 0.5)))
        m = condition(x, y, h)
        mu, var = m.predict(z, standardised=True)
        mu_o, var_o = _dense_oracle(h, x, y, z)
        assert np.max(np.abs(mu - mu_o)) <= 1e-8
        assert np.max(np.abs(var - var_o)) <= 1e-8


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_posterior_variance_bounds_and_gram_psd(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    x = rng.uniform(-1, 1, (int(rng.integers(2, 12)), d))
    h = GpHyperparams(rng.uniform(0.05, 3.0, d), float(rng.uniform(0.1, 3.0)), float(10 ** rng.uniform(-8, 0)))
    assert np.linalg.eigvalsh(gram(h, x)).min() >= -1e-8
    m = condition(x, rng.normal(size=len(x)), h)
    _, var = m.predict(rng.uniform(-2, 2, (20, d)), standardised=True)
    assert np.all(var >= 0.0)
    assert np.all(var <= h.signal_variance + 1e-6)


def test_fit_improves_on_default_lml():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x = rng.uniform(-1, 1, (5, 2))
        y = np.sin(3 * x[:, 0]) + 0.1 * rng.normal(size=5)
        m = fit(x, y, rng=int(rng.integers(1 << 30)))
        assert log_marginal_likelihood(m.hyperparams, x, y) >= log_marginal_likelihood(GpHyperparams.default(2), x, y)
        assert m.lml == pytest.approx(log_marginal_likelihood(m.hyperparams, x, y), abs=1e-9)


def test_fit_is_deterministic_given_seed():
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, (12, 3))
    y = rng.normal(size=12)
    a, b = fit(x, y, rng=5), fit(x, y, rng=5)
    np.testing.assert_array_equal(a.hyperparams.to_vector(), b.hyperparams.to_vector())
    z = rng.uniform(-1, 1, (4, 3))
    np.testing.assert_array_equal(a.predict(z)[0], b.predict(z)[0])


def test_single_observation_shrinks_towards_prior():
    m = fit(np.array([[0.2]]), np.array([4.0]))
    mu, _ = m.predict(np.array([[0.2]]), standardised=True)
    # one point standardises to 0, which is also the prior mean
    assert abs(mu[0]) <= 1e-12
    # on the original scale the prediction equals the single observation
    assert m.posterior([0.2])[0] == pytest.approx(4.0)


def test_duplicate_inputs_with_conflicting_targets():
    x = np.array([[0.5], [0.5], [0.1]])
    y = np.array([1.0, -1.0, 0.0])
    m = fit(x, y)
    assert m.hyperparams.noise_variance > 0
    assert np.isfinite(m.posterior([0.5])[0])


def test_near_noiseless_interpolation():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, (8, 2))
    y = rng.normal(size=8)
    h = GpHyperparams(np.array([0.5, 0.5]), 1.0, 1e-8)
    m = condition(x, y, h)
    mu, _ = m.predict(x, standardised=True)
    assert np.max(np.abs(mu - (y - y.mean()) / y.std())) <= 1e-3


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 100), st.floats(-100, 100), st.integers(0, 1000))
def test_affine_target_transform(a, b, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (6, 2))
    y = rng.normal(size=6)
    h = GpHyperparams(np.array([0.7, 1.2]), 1.0, 1e-2)
    z = rng.uniform(-1, 1, (5, 2))
    mu, var = condition(x, y, h).predict(z)
    mu2, var2 = condition(x, a * y + b, h).predict(z)
    np.testing.assert_allclose(mu2, a * mu + b, atol=1e-6 * max(1.0, abs(b), a))
    np.testing.assert_allclose(var2, a * a * var, atol=1e-6 * max(1.0, a * a))


def test_lml_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, (10, 3))
    ys = rng.normal(size=10)
    v = np.log(np.r_[0.6, 1.1, 2.0, 1.4, 0.05])
    _, g = _lml_and_grad(v, x, ys)
    eps = 1e-6
    fd = np.array([
        (_lml_and_grad(v + eps * e, x, ys, False) - _lml_and_grad(v - eps * e, x, ys, False)) / (2 * eps)
        for e in np.eye(len(v))
    ])
    np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-6)


def test_serialisation_round_trip():
    rng = np.random.default_rng(5)
    x = rng.uniform(-1, 1, (6, 2))
    m = fit(x, rng.normal(size=6))
    m2 = GpModel.from_dict(m.to_dict())
    z = rng.uniform(-1, 1, (3, 2))
    np.testing.assert_array_equal(m.predict(z)[0], m2.predict(z)[0])


@pytest.mark.parametrize(
    "x,y",
    [
        (np.zeros((0, 1)), np.zeros(0)),
        (np.zeros((2, 1)), np.zeros(3)),
        (np.array([[np.nan]]), np.array([1.0])),
    ],
)
def test_fit_rejects_bad_data(x, y):
    with pytest.raises(GpError):
        fit(x, y)


def test_bad_hyperparameters():
    with pytest.raises(GpError):
        GpHyperparams(np.array([-1.0]))
    with pytest.raises(GpError):
        GpHyperparams(np.array([1.0]), 1.0, 0.0)
