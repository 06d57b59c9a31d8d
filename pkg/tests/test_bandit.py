from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cocabo.bandit import ScopeBandit


def test_fresh_bandit_pulls_lowest_unpulled_arm():
    b = ScopeBandit(3)
    assert b.select() == 0
    b.update(0, 1.0)
    assert b.select() == 1


def test_update_examples():
    b = ScopeBandit(2)
    b.update(0, 1.0)
    assert b.arms[0].pulls == 1 and b.arms[0].mean == 1.0
    b = ScopeBandit(2)
    b.update(0, 0.0)
    b.update(0, 1.0)
    assert b.arms[0].mean == 0.5
    assert (b.raw_min, b.raw_max) == (0.0, 1.0)


def _loaded(pulls_a: int, mean_a: float, pulls_b: int, mean_b: float, c: float = math.sqrt(2)) -> ScopeBandit:
    b = ScopeBandit(2, exploration_c=c)
    b.arms[0].pulls, b.arms[0].reward_sum = pulls_a, pulls_a * mean_a
    b.arms[1].pulls, b.arms[1].reward_sum = pulls_b, pulls_b * mean_b
    b.total_pulls = pulls_a + pulls_b
    b.raw_min, b.raw_max = 0.0, 1.0
    return b


def test_exploitation_at_equal_counts():
    assert _loaded(100, 0.9, 100, 0.1).select() == 0


def test_exploration_bonus_dominates_small_gap():
    b = _loaded(1000, 0.6, 2, 0.5, c=1.0)
    assert math.sqrt(math.log(1002) / 2) == pytest.approx(1.86, abs=0.01)
    assert b.select() == 1


def test_index_formula():
    b = _loaded(10, 0.4, 5, 0.2, c=0.7)
    assert b.index(1) == pytest.approx(0.2 + 0.7 * math.sqrt(math.log(15) / 5), abs=1e-15)


def test_invalid_updates():
    b = ScopeBandit(2)
    with pytest.raises(IndexError):
        b.update(2, 0.0)
    with pytest.raises(ValueError):
        b.update(0, math.inf)
    with pytest.raises(ValueError):
        ScopeBandit(0)
    with pytest.raises(ValueError):
        ScopeBandit(2, exploration_c=0.0)


def _bernoulli_run(seed: int, p=(0.9, 0.1), pulls: int = 2000) -> float:
    rng = np.random.default_rng(seed)
    b = ScopeBandit(len(p))
    best = int(np.argmax(p))
    hits = 0
    for _ in range(pulls):
        a = b.select()
        hits += a == best
        b.update(a, float(rng.random() < p[a]))
    return hits / pulls


def test_two_arm_bernoulli_best_arm_fraction():
    frac = np.mean([_bernoulli_run(s) for s in range(50)])
    assert frac >= 0.8


def test_gap_point_three_best_arm_fraction():
    frac = np.mean([_bernoulli_run(s, p=(0.35, 0.65)) for s in range(50)])
    assert frac >= 0.8


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(-1000, 1000), min_size=1, max_size=60),
    st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]),
    st.integers(-64, 64),
    st.integers(1, 5),
)
def test_selection_exactly_invariant_under_dyadic_affine_maps(rewards, a, c, arms):
    def run(transform):
        b = ScopeBandit(arms)
        seq = []
        for r in rewards:
            arm = b.select()
            seq.append(arm)
            b.update(arm, transform(float(r)))
        return seq

    assert run(lambda r: a * r + c) == run(lambda r: r)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.floats(-10, 10)), max_size=50), st.one_of(st.none(), st.integers(1, 10)))
def test_state_is_a_fold_over_updates(events, window):
    a, b = ScopeBandit(4, window=window), ScopeBandit(4, window=window)
    for arm, y in events:
        a.update(arm, y)
    for arm, y in events:
        b.update(arm, y)
    assert a.to_dict() == b.to_dict()
    assert all(0 <= a.select() < 4 for _ in range(2))


def test_every_arm_pulled_when_horizon_covers_arms():
    b = ScopeBandit(5)
    rng = np.random.default_rng(0)
    for _ in range(5):
        arm = b.select()
        b.update(arm, float(rng.normal()))
    assert all(arm.pulls == 1 for arm in b.arms)


def test_sliding_window_forgets_old_rewards():
    b = ScopeBandit(2, window=3)
    for y in (1.0, 1.0, 1.0):
        b.update(0, y)
    for y in (0.0, 0.0, 0.0):
        b.update(1, y)
    assert b.arms[0].pulls == 0 and b.arms[1].pulls == 3
    assert b.select() == 0
