from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocabo.metrics import (
    aggregate,
    compute_regret,
    frequency_csv,
    read_frequency_csv,
    read_regret_csv,
    regret_csv,
    selection_frequency,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_regret_at_optimum_is_zero():
    r = compute_regret([1 / 3, 1 / 3], 1 / 3)
    np.testing.assert_array_equal(r.normalised, [0.0, 0.0])


def test_regret_hand_arithmetic():
    r = compute_regret([0.0, 1 / 3], 1 / 3)
    np.testing.assert_allclose(r.immediate, [-1 / 3, 0.0], atol=1e-15)
    np.testing.assert_allclose(r.normalised, [-1 / 3, -1 / 6], atol=1e-15)


def test_minimisation_flips_sign():
    r = compute_regret([0.5, 0.0], 0.0, objective="minimise")
    np.testing.assert_array_equal(r.immediate, [-0.5, 0.0])


def test_regret_errors():
    with pytest.raises(ValueError):
        compute_regret([], 0.0)
    with pytest.raises(ValueError):
        compute_regret([1.0], 0.0, objective="sideways")


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=1, max_size=80), finite)
def test_running_mean_matches_prefix_sum_oracle(y, mu):
    r = compute_regret(y, mu)
    acc = 0.0
    for t, v in enumerate(r.immediate, start=1):
        acc += v
        assert abs(r.normalised[t - 1] - acc / t) <= 1e-12 * max(1.0, abs(acc / t))
    # exact rational oracle on the same immediate regrets
    exact = [float(sum(Fraction(float(v)) for v in r.immediate[:t]) / t) for t in range(1, len(y) + 1)]
    np.testing.assert_allclose(r.normalised, exact, rtol=1e-9, atol=1e-9)


def test_selection_frequency_examples():
    f = selection_frequency([0, 1, 0, 0], 2)
    np.testing.assert_allclose(f[:, 0], [1, 0.5, 2 / 3, 0.75], atol=1e-15)
    np.testing.assert_array_equal(selection_frequency([0, 0, 0], 1), np.ones((3, 1)))
    with pytest.raises(ValueError):
        selection_frequency([0, 3], 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6).flatmap(lambda k: st.tuples(st.just(k), st.lists(st.integers(0, k - 1), min_size=1, max_size=80))))
def test_frequencies_sum_to_one_and_count(args):
    k, ids = args
    f = selection_frequency(ids, k)
    assert np.all(np.abs(f.sum(1) - 1.0) <= 1e-12)
    for t in range(1, len(ids) + 1):
        for j in range(k):
            assert f[t - 1, j] == pytest.approx(ids[:t].count(j) / t, abs=1e-15)


def test_band_half_width():
    series = [np.array([0.0, 1.0]), np.array([2.0, 1.0]), np.array([4.0, 1.0])]
    band = aggregate(series)
    np.testing.assert_array_equal(band.mean, [2.0, 1.0])
    half = 1.96 * 2.0 / math.sqrt(3)
    np.testing.assert_allclose(band.high - band.mean, [half, 0.0], atol=1e-15)
    np.testing.assert_allclose(band.mean - band.low, [half, 0.0], atol=1e-15)
    assert band.n == 3


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(1, 20), st.randoms(use_true_random=False), st.integers(0, 10_000))
def test_aggregation_is_permutation_invariant(n_seeds, length, rnd, seed):
    rng = np.random.default_rng(seed)
    series = [rng.normal(size=length) * 10 ** rng.uniform(-3, 3) for _ in range(n_seeds)]
    shuffled = list(series)
    rnd.shuffle(shuffled)
    a, b = aggregate(series), aggregate(shuffled)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.low, b.low)
    np.testing.assert_array_equal(a.high, b.high)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(finite, min_size=5, max_size=5), min_size=1, max_size=5))
def test_regret_csv_round_trip(rows):
    band = aggregate([np.array(r) for r in rows])
    back = read_regret_csv(regret_csv(band))
    np.testing.assert_array_equal(back.mean, band.mean)
    np.testing.assert_array_equal(back.low, band.low)
    np.testing.assert_array_equal(back.high, band.high)


def test_frequency_csv_round_trip():
    f = selection_frequency([0, 2, 1, 1, 0, 2, 2], 3)
    names = ["<X1|C>", "<X2|C>", "<X1|> <X2|>"]
    text = frequency_csv(f, names)
    assert text.splitlines()[0] == 'iteration,<X1|C>,<X2|C>,<X1|> <X2|>'
    got_names, got = read_frequency_csv(text)
    assert got_names == names
    np.testing.assert_array_equal(got, f)


def test_regret_csv_header():
    text = regret_csv(aggregate([np.zeros(2)]))
    assert text.splitlines()[0] == "iteration,mean_normalized_regret,ci_low,ci_high"
    assert text.splitlines()[1].startswith("1,")
