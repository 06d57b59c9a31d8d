"""Multi-acquisition policy step: EI, PI and UCB over a candidate pool.

Everything maximises.  A candidate pool mixes scrambled Sobol points with
Gaussian perturbations of the incumbent; the suggestion is drawn uniformly
from the Pareto front of the three acquisition values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import qmc

from .gp import GpModel
from .scm import DomainSpec

__all__ = [
    "BETA",
    "AcquisitionVector",
    "CandidateBatch",
    "acquisition_values",
    "evaluate",
    "candidates",
    "pareto_front",
    "suggest",
]

BETA = 2.0
N_SOBOL = 512
N_PERTURB = 32
PERTURB_SCALE = 0.05

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class AcquisitionVector:
    ei: float
    pi: float
    ucb: float


@dataclass(frozen=True)
class CandidateBatch:
    points: np.ndarray
    generator: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.points) < 1:
            raise ValueError("candidate batch is empty")
        if len(self.generator) != len(self.points):
            raise ValueError("one generator tag per point")

    def __len__(self) -> int:
        return len(self.points)


def acquisition_values(
    mu: np.ndarray, sigma: np.ndarray, best: float, beta: float = BETA
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised ``(ei, pi, ucb)``; zero ``sigma`` takes the limiting values."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise ValueError("posterior is not finite")
    gap = mu - best
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    u = gap / safe
    # the density is exactly 0 in double precision well before |u| = 40
    uc = np.clip(u, -40.0, 40.0)
    ei = np.where(pos, gap * ndtr(u) + sigma * _INV_SQRT_2PI * np.exp(-0.5 * uc * uc), np.maximum(gap, 0.0))
    pi = np.where(pos, ndtr(u), (gap > 0).astype(float))
    # the closed form can dip a hair below zero for very negative u
    ei = np.maximum(ei, 0.0)
    return ei, pi, mu + beta * sigma


def evaluate(
    m: GpModel, x: Sequence[float], c: Sequence[float], best_y: float, beta: float = BETA
) -> AcquisitionVector:
    """Acquisition vector at ``z = (x, c)`` for an already-encoded input."""
    z = np.r_[np.asarray(x, dtype=float), np.asarray(c, dtype=float)]
    mu, sigma = m.posterior(z)
    ei, pi, ucb = acquisition_values(np.array([mu]), np.array([sigma]), best_y, beta)
    return AcquisitionVector(float(ei[0]), float(pi[0]), float(ucb[0]))


def _snap(points: np.ndarray, domains: Sequence[DomainSpec]) -> np.ndarray:
    out = np.empty_like(points)
    for j, d in enumerate(domains):
        out[:, j] = d.clip(points[:, j])
    return out


def candidates(
    domains: Sequence[DomainSpec],
    rng: np.random.Generator,
    incumbent: Sequence[float] | None = None,
    n_sobol: int = N_SOBOL,
    n_perturb: int = N_PERTURB,
    scale: float = PERTURB_SCALE,
) -> CandidateBatch:
    """Scrambled Sobol points over the domain box plus perturbations of ``incumbent``."""
    if not domains:
        raise ValueError("empty domain")
    d = len(domains)
    lo = np.array([dom.lo for dom in domains])
    hi = np.array([dom.hi for dom in domains])
    width = np.array([dom.width for dom in domains])
    sob = qmc.Sobol(d, scramble=True, seed=rng).random(n_sobol)
    pts = [lo + sob * (hi - lo)]
    tags = ["quasi-random"] * n_sobol
    if incumbent is not None and n_perturb > 0:
        inc = np.asarray(incumbent, dtype=float)
        pts.append(inc + scale * width * rng.standard_normal((n_perturb, d)))
        tags += ["incumbent-perturbation"] * n_perturb
    return CandidateBatch(_snap(np.vstack(pts), domains), tuple(tags))


def pareto_front(values: np.ndarray) -> np.ndarray:
    """Indices of rows not dominated by any other row (maximisation), ascending.

    A dominating row is lexicographically at least as large, so one sweep in
    descending lexicographic order that checks each row against the front
    found so far is enough.
    """
    f = np.asarray(values, dtype=float)
    order = np.lexsort(tuple(-f[:, j] for j in reversed(range(f.shape[1]))))
    front: list[int] = []
    for i in order:
        if front:
            g = f[front]
            if np.any((g >= f[i]).all(axis=1) & (g > f[i]).any(axis=1)):
                continue
        front.append(int(i))
    return np.array(sorted(front), dtype=int)


Encoder = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _default_encoder(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.broadcast_to(c, (len(x), len(c)))])


def suggest(
    m: GpModel | None,
    c: Sequence[float],
    domains: Sequence[DomainSpec],
    rng: np.random.Generator,
    beta: float = BETA,
    best_y: float | None = None,
    incumbent: Sequence[float] | None = None,
    encode: Encoder | None = None,
    maximise: bool = True,
) -> np.ndarray:
    """Choose an intervention for the observed context ``c``.

    ``encode(x_batch, c)`` maps raw interventions and the context to model
    inputs (default: plain concatenation).  ``best_y`` is the incumbent target
    value in the caller's convention; with ``maximise=False`` the model's
    predictions are negated internally.  Without a model, or before any data,
    the first quasi-random candidate is returned.
    """
    batch = candidates(domains, rng, incumbent)
    if m is None or m.n == 0:
        return batch.points[0].copy()
    c = np.asarray(c, dtype=float)
    z = (encode or _default_encoder)(batch.points, c)
    mu, var = m.predict(z)
    sign = 1.0 if maximise else -1.0
    mu = sign * mu
    if best_y is None:
        best = float(np.max(sign * m.y))
    else:
        best = sign * float(best_y)
    ei, pi, ucb = acquisition_values(mu, np.sqrt(var), best, beta)
    front = pareto_front(np.column_stack([ei, pi, ucb]))
    pick = front[rng.integers(len(front))]
    return batch.points[pick].copy()
