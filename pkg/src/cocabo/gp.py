"""Gaussian-process surrogate with a Matérn-5/2 ARD kernel.

Targets are standardised before fitting; posterior queries return values on
the original scale.  Inputs are used as given, so callers are expected to
scale them to comparable ranges (the engine maps them to the unit box).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import linalg, optimize

logger = logging.getLogger(__name__)

__all__ = [
    "GpError",
    "GpHyperparams",
    "GpModel",
    "kernel",
    "gram",
    "log_marginal_likelihood",
    "fit",
    "condition",
]

SQRT5 = math.sqrt(5.0)
LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SIGNAL_BOUNDS = (1e-3, 1e2)
NOISE_BOUNDS = (1e-8, 10.0)
JITTERS = (0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
Y_STD_FLOOR = 1e-6


class GpError(ValueError):
    pass


@dataclass(frozen=True)
class GpHyperparams:
    lengthscales: np.ndarray
    signal_variance: float = 1.0
    noise_variance: float = 1e-2

    def __post_init__(self) -> None:
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if np.any(ls <= 0) or self.signal_variance <= 0 or self.noise_variance < NOISE_BOUNDS[0]:
            raise GpError("hyperparameters must be positive (noise variance >= 1e-8)")

    @classmethod
    def default(cls, dim: int) -> "GpHyperparams":
        return cls(np.ones(dim), 1.0, 1e-2)

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def to_vector(self) -> np.ndarray:
        return np.log(np.r_[self.lengthscales, self.signal_variance, self.noise_variance])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "GpHyperparams":
        e = np.exp(np.asarray(v, dtype=float))
        return cls(e[:-2], float(e[-2]), float(max(e[-1], NOISE_BOUNDS[0])))

    def to_dict(self) -> dict[str, Any]:
        return {
            "lengthscales": [float(v) for v in self.lengthscales],
            "signal_variance": float(self.signal_variance),
            "noise_variance": float(self.noise_variance),
        }


def _scaled_dist(a: np.ndarray, b: np.ndarray, ls: np.ndarray) -> np.ndarray:
    a = a / ls
    b = b / ls
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(sq, 0.0))


def gram(h: GpHyperparams, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Kernel matrix between the rows of ``a`` and ``b`` (``b`` defaults to ``a``)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != h.dim or b.shape[1] != h.dim:
        raise GpError(f"input dimension mismatch: expected {h.dim}")
    r = _scaled_dist(a, b, h.lengthscales)
    k = h.signal_variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)
    if b is a:
        np.fill_diagonal(k, h.signal_variance)
    return k


def kernel(h: GpHyperparams, z: Sequence[float], z2: Sequence[float]) -> float:
    z = np.asarray(z, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    if z.shape != (h.dim,) or z2.shape != (h.dim,):
        raise GpError(f"kernel inputs must both have length {h.dim}")
    r = float(np.sqrt(np.sum(((z - z2) / h.lengthscales) ** 2)))
    return h.signal_variance * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * math.exp(-SQRT5 * r)


def _cholesky(k: np.ndarray) -> tuple[np.ndarray, float]:
    for jitter in JITTERS:
        try:
            a = k if jitter == 0.0 else k + jitter * np.eye(len(k))
            return linalg.cholesky(a, lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            continue
    raise GpError("Cholesky factorisation failed even with maximal jitter")


def _lml_and_grad(v: np.ndarray, x: np.ndarray, ys: np.ndarray, want_grad: bool = True):
    """Log marginal likelihood (standardised targets) and its gradient in log-parameter space."""
    h = GpHyperparams.from_vector(v)
    n = len(ys)
    r = _scaled_dist(x, x, h.lengthscales)
    e = np.exp(-SQRT5 * r)
    kf = h.signal_variance * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * e
    k = kf + h.noise_variance * np.eye(n)
    try:
        lo, _ = _cholesky(k)
    except GpError:
        return (-np.inf, np.zeros_like(v)) if want_grad else -np.inf
    alpha = linalg.cho_solve((lo, True), ys, check_finite=False)
    lml = -0.5 * float(ys @ alpha) - float(np.log(np.diag(lo)).sum()) - 0.5 * n * math.log(2 * math.pi)
    if not want_grad:
        return lml
    kinv = linalg.cho_solve((lo, True), np.eye(n), check_finite=False)
    w = np.outer(alpha, alpha) - kinv
    # d k / d log l_d = s * 5/3 * (1 + sqrt5 r) e^{-sqrt5 r} * (dx_d / l_d)^2
    m = w * (h.signal_variance * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e)
    xs = x / h.lengthscales
    mx = m @ xs
    g_ls = 0.5 * (2.0 * (m.sum(1) @ (xs * xs)) - 2.0 * (xs * mx).sum(0))
    g_sig = 0.5 * float((w * kf).sum())
    g_noise = 0.5 * h.noise_variance * float(np.trace(w))
    return lml, np.r_[g_ls, g_sig, g_noise]


def log_marginal_likelihood(h: GpHyperparams, x: np.ndarray, y: np.ndarray, standardise: bool = True) -> float:
    """``log p(y | X, h)``; by default ``y`` is standardised exactly as :func:`fit` does."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if standardise:
        y = (y - y.mean()) / max(float(y.std()), Y_STD_FLOOR)
    return float(_lml_and_grad(h.to_vector(), x, y, want_grad=False))


@dataclass(frozen=True)
class GpModel:
    x: np.ndarray
    y: np.ndarray
    hyperparams: GpHyperparams
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float
    y_std: float
    jitter: float = 0.0
    lml: float = field(default=float("nan"), compare=False)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def dim(self) -> int:
        return self.hyperparams.dim

    def predict(self, z: np.ndarray, standardised: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance of the latent function at the rows of ``z``."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.dim:
            raise GpError(f"query dimension {z.shape[1]} != model dimension {self.dim}")
        ks = gram(self.hyperparams, self.x, z)
        mu = ks.T @ self.alpha
        v = linalg.solve_triangular(self.chol, ks, lower=True, check_finite=False)
        var = self.hyperparams.signal_variance - (v * v).sum(0)
        var = np.maximum(var, 0.0)
        if standardised:
            return mu, var
        return self.y_mean + self.y_std * mu, var * self.y_std**2

    def posterior(self, z: Sequence[float]) -> tuple[float, float]:
        """``(mu, sigma)`` at a single point, on the original target scale."""
        mu, var = self.predict(np.asarray(z, dtype=float)[None, :])
        return float(mu[0]), float(math.sqrt(var[0]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "hyperparams": self.hyperparams.to_dict(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GpModel":
        h = d["hyperparams"]
        hp = GpHyperparams(np.asarray(h["lengthscales"]), h["signal_variance"], h["noise_variance"])
        return condition(np.asarray(d["x"]), np.asarray(d["y"]), hp)


def _prepare(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim == 1:
        x = x[:, None]
    if len(y) < 1:
        raise GpError("need at least one observation")
    if len(x) != len(y):
        raise GpError("x and y lengths differ")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise GpError("observations must be finite")
    return x, y


def condition(x: np.ndarray, y: np.ndarray, h: GpHyperparams) -> GpModel:
    """Posterior for fixed hyperparameters."""
    x, y = _prepare(x, y)
    if x.shape[1] != h.dim:
        raise GpError("hyperparameter dimension does not match inputs")
    y_mean = float(y.mean())
    y_std = max(float(y.std()), Y_STD_FLOOR)
    ys = (y - y_mean) / y_std
    k = gram(h, x) + h.noise_variance * np.eye(len(y))
    lo, jitter = _cholesky(k)
    alpha = linalg.cho_solve((lo, True), ys, check_finite=False)
    lml = -0.5 * float(ys @ alpha) - float(np.log(np.diag(lo)).sum()) - 0.5 * len(y) * math.log(2 * math.pi)
    return GpModel(x, y, h, lo, alpha, y_mean, y_std, jitter, lml)


def _bounds(dim: int) -> list[tuple[float, float]]:
    b = [tuple(np.log(LENGTHSCALE_BOUNDS))] * dim
    return b + [tuple(np.log(SIGNAL_BOUNDS)), tuple(np.log(NOISE_BOUNDS))]


def fit(
    x: np.ndarray,
    y: np.ndarray,
    rng: np.random.Generator | int | None = 0,
    n_starts: int = 8,
    n_refine: int = 2,
    maxiter: int = 50,
    init: GpHyperparams | None = None,
) -> GpModel:
    """Fit hyperparameters by maximising the log marginal likelihood.

    ``n_starts`` candidate settings (the defaults plus random log-uniform
    draws, plus ``init`` when given, e.g. the previous fit) are scored; the
    best ``n_refine`` are polished with L-BFGS-B using analytic gradients.
    The winner never scores below the default setting.
    """
    x, y = _prepare(x, y)
    rng = np.random.default_rng(rng)
    dim = x.shape[1]
    ys = (y - y.mean()) / max(float(y.std()), Y_STD_FLOOR)
    bounds = _bounds(dim)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    starts = [GpHyperparams.default(dim).to_vector()]
    if init is not None:
        if init.dim != dim:
            raise GpError("initial hyperparameters have the wrong dimension")
        starts.append(np.clip(init.to_vector(), lo, hi))
    while len(starts) < max(n_starts, 8):
        starts.append(
            np.r_[
                rng.uniform(np.log(0.05), np.log(5.0), dim),
                rng.uniform(np.log(0.1), np.log(10.0)),
                rng.uniform(np.log(1e-4), np.log(1.0)),
            ]
        )
    scored = [(float(_lml_and_grad(v, x, ys, want_grad=False)), i, v) for i, v in enumerate(starts)]
    scored.sort(key=lambda t: (-t[0], t[1]))
    best_val, _, best_v = scored[0]

    def objective(v):
        val, g = _lml_and_grad(v, x, ys)
        if not np.isfinite(val):
            return 1e25, np.zeros_like(v)
        return -val, -g

    for val, _, v0 in scored[: max(n_refine, 1)]:
        if not np.isfinite(val):
            continue
        res = optimize.minimize(
            objective, v0, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": maxiter}
        )
        cand = np.clip(res.x, lo, hi)
        cand_val = float(_lml_and_grad(cand, x, ys, want_grad=False))
        if np.isfinite(cand_val) and cand_val > best_val:
            best_val, best_v = cand_val, cand
    if not np.isfinite(best_val):
        raise GpError("log marginal likelihood is not finite at any start")
    return condition(x, y, GpHyperparams.from_vector(best_v))
