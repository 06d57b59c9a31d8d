"""UCB1 bandit over policy scopes.

Rewards are unbounded target values, so each arm's mean is rescaled to
``[0, 1]`` with the running minimum and maximum over all observed rewards
before the exploration bonus is added.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any

__all__ = ["ArmStats", "ScopeBandit"]


@dataclass
class ArmStats:
    pulls: int = 0
    reward_sum: float = 0.0
    raw_min: float = math.inf
    raw_max: float = -math.inf

    @property
    def mean(self) -> float:
        return self.reward_sum / self.pulls if self.pulls else 0.0

    def add(self, y: float) -> None:
        self.pulls += 1
        self.reward_sum += y
        self.raw_min = min(self.raw_min, y)
        self.raw_max = max(self.raw_max, y)


@dataclass
class ScopeBandit:
    """One arm per scope, in scope-set order.

    With ``window`` set, arm statistics only count the most recent
    ``window`` pulls (sliding-window UCB); the normalisation range always
    covers the whole history.
    """

    n_arms: int
    exploration_c: float = math.sqrt(2.0)
    window: int | None = None
    arms: list[ArmStats] = field(init=False)
    total_pulls: int = field(init=False, default=0)
    raw_min: float = field(init=False, default=math.inf)
    raw_max: float = field(init=False, default=-math.inf)
    _recent: deque = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.n_arms < 1:
            raise ValueError("bandit needs at least one arm")
        if not self.exploration_c > 0:
            raise ValueError("exploration_c must be positive")
        if self.window is not None and self.window < 1:
            raise ValueError("window must be >= 1")
        self.arms = [ArmStats() for _ in range(self.n_arms)]
        self._recent = deque()

    def normalised_mean(self, arm: int) -> float:
        a = self.arms[arm]
        span = self.raw_max - self.raw_min
        if not span > 0 or a.pulls == 0:
            return a.mean
        # (sum - n * min) / (n * span) rounds identically under exact affine maps of the rewards
        return (a.reward_sum - a.pulls * self.raw_min) / (a.pulls * span)

    def index(self, arm: int) -> float:
        a = self.arms[arm]
        if a.pulls == 0:
            return math.inf
        return self.normalised_mean(arm) + self.exploration_c * math.sqrt(math.log(self.total_pulls) / a.pulls)

    def select(self) -> int:
        for i, a in enumerate(self.arms):
            if a.pulls == 0:
                return i
        best, best_val = 0, -math.inf
        for i in range(self.n_arms):
            v = self.index(i)
            if v > best_val:
                best, best_val = i, v
        return best

    def update(self, arm: int, y: float) -> None:
        if not 0 <= arm < self.n_arms:
            raise IndexError(f"arm {arm} out of range")
        y = float(y)
        if not math.isfinite(y):
            raise ValueError("reward must be finite")
        self.raw_min = min(self.raw_min, y)
        self.raw_max = max(self.raw_max, y)
        if self.window is None:
            self.arms[arm].add(y)
            self.total_pulls += 1
            return
        self._recent.append((arm, y))
        if len(self._recent) > self.window:
            self._recent.popleft()
        self.arms = [ArmStats() for _ in range(self.n_arms)]
        for a, r in self._recent:
            self.arms[a].add(r)
        self.total_pulls = len(self._recent)

    def to_dict(self) -> dict[str, Any]:
        return {
            "exploration_c": self.exploration_c,
            "window": self.window,
            "total_pulls": self.total_pulls,
            "raw_min": self.raw_min if self.total_pulls else None,
            "raw_max": self.raw_max if self.total_pulls else None,
            "arms": [{"pulls": a.pulls, "reward_sum": a.reward_sum} for a in self.arms],
        }
