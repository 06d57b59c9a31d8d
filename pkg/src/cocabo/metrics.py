"""Regret and selection-frequency curves, aggregation across seeds, CSV export."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "RegretSeries",
    "Band",
    "compute_regret",
    "selection_frequency",
    "aggregate",
    "regret_csv",
    "frequency_csv",
    "read_regret_csv",
    "read_frequency_csv",
]

Z95 = 1.96


@dataclass(frozen=True)
class RegretSeries:
    immediate: np.ndarray
    normalised: np.ndarray

    def __len__(self) -> int:
        return len(self.immediate)


def _prefix_mean(r: np.ndarray) -> np.ndarray:
    out = np.empty(len(r))
    total = 0.0
    for i, v in enumerate(r):
        total += float(v)
        out[i] = total / (i + 1)
    return out


def compute_regret(y: Sequence[float], mu_star: float, objective: str = "maximise") -> RegretSeries:
    """``R_t = y_t - mu*`` (``mu* - y_t`` when minimising) and its running mean.

    The sign convention puts the optimum at zero with worse policies below
    it.  Sums are accumulated left to right.
    """
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("empty trajectory")
    if objective not in ("maximise", "minimise"):
        raise ValueError("objective must be 'maximise' or 'minimise'")
    r = y - mu_star if objective == "maximise" else mu_star - y
    return RegretSeries(r, _prefix_mean(r))


def selection_frequency(scope_ids: Sequence[int], n_scopes: int) -> np.ndarray:
    """``(T, n_scopes)`` array: fraction of the first ``t`` iterations spent in each scope."""
    ids = np.asarray(scope_ids, dtype=int)
    if ids.size and (ids.min() < 0 or ids.max() >= n_scopes):
        raise ValueError("scope id out of range")
    onehot = np.zeros((len(ids), n_scopes))
    onehot[np.arange(len(ids)), ids] = 1.0
    return np.cumsum(onehot, axis=0) / np.arange(1, len(ids) + 1)[:, None]


@dataclass(frozen=True)
class Band:
    mean: np.ndarray
    low: np.ndarray
    high: np.ndarray
    n: int


def aggregate(series: Sequence[np.ndarray]) -> Band:
    """Mean over seeds with a ``1.96 * sd / sqrt(n)`` band (sample standard deviation)."""
    a = np.vstack([np.asarray(s, dtype=float) for s in series])
    n = a.shape[0]
    # sort each column so the reduction does not depend on seed order
    a = np.sort(a, axis=0)
    mean = a.mean(axis=0)
    sd = a.std(axis=0, ddof=1) if n > 1 else np.zeros(a.shape[1])
    half = Z95 * sd / math.sqrt(n)
    return Band(mean, mean - half, mean + half, n)


def _fmt(v: float) -> str:
    return repr(float(v))


def regret_csv(band: Band) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "mean_normalized_regret", "ci_low", "ci_high"])
    for t, (m, lo, hi) in enumerate(zip(band.mean, band.low, band.high), start=1):
        w.writerow([t, _fmt(m), _fmt(lo), _fmt(hi)])
    return buf.getvalue()


def frequency_csv(freq: np.ndarray, names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", *names])
    for t, row in enumerate(freq, start=1):
        w.writerow([t, *(_fmt(v) for v in row)])
    return buf.getvalue()


def read_regret_csv(text: str) -> Band:
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != ["iteration", "mean_normalized_regret", "ci_low", "ci_high"]:
        raise ValueError("not a regret CSV")
    body = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return Band(body[:, 0], body[:, 1], body[:, 2], 0)


def read_frequency_csv(text: str) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0][1:], np.array([[float(v) for v in r[1:]] for r in rows[1:]])
