"""Optimisation loops: CoCa-BO, and the CaBO and CoBO baselines.

All three share the same per-scope optimiser (a GP over interventions and
contexts plus the multi-acquisition policy step).  Targets are negated once
at this boundary for minimisation problems, so everything below maximises.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.stats import qmc

from . import acquisition
from .bandit import ScopeBandit
from .gp import GpHyperparams, GpModel, condition, fit
from .graph import CausalGraph, Kind, descendants, mutilate
from .scm import DomainSpec, Policy, Scm, simulate
from .scopes import MixedPolicyScope, ScopeError, ScopePair, ScopeSet, serialize_scopes, validate_mps

logger = logging.getLogger(__name__)

__all__ = [
    "OPTIMIZERS",
    "GpSettings",
    "BanditSettings",
    "ExperimentConfig",
    "StepRecord",
    "Trajectory",
    "ScopeOptimizer",
    "cobo_scope",
    "run",
    "run_cocabo",
    "run_cabo",
    "run_cobo",
]

OPTIMIZERS = ("cocabo", "cabo", "cobo")


@dataclass(frozen=True)
class GpSettings:
    n_starts: int = 8
    n_refine: int = 1
    maxiter: int = 30
    refit_all_until: int = 100
    refit_period: int = 5
    beta: float = acquisition.BETA
    n_init: int = 2
    contextual_incumbent: bool = True

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class BanditSettings:
    exploration_c: float = math.sqrt(2.0)
    window: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class ExperimentConfig:
    graph: CausalGraph
    scm: Scm
    scopes: ScopeSet
    optimizer: str = "cocabo"
    iterations: int = 300
    seed: int | tuple[int, ...] = 0
    objective: str = "maximise"
    gp: GpSettings = field(default_factory=GpSettings)
    bandit: BanditSettings = field(default_factory=BanditSettings)
    cabo_epsilon: float = 0.1
    label: str = ""

    def __post_init__(self) -> None:
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.objective not in ("maximise", "minimise"):
            raise ValueError("objective must be 'maximise' or 'minimise'")
        if not 0.0 <= self.cabo_epsilon <= 1.0:
            raise ValueError("cabo_epsilon must lie in [0, 1]")
        if len(self.scopes) == 0:
            raise ValueError("scope set is empty")

    @property
    def sign(self) -> float:
        return 1.0 if self.objective == "maximise" else -1.0

    def echo(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "optimizer": self.optimizer,
            "iterations": self.iterations,
            "seed": list(self.seed) if isinstance(self.seed, tuple) else self.seed,
            "objective": self.objective,
            "target": self.scm.target,
            "gp": self.gp.to_dict(),
            "bandit": self.bandit.to_dict(),
            "cabo_epsilon": self.cabo_epsilon,
        }


@dataclass(frozen=True)
class StepRecord:
    t: int
    scope_id: int
    context: dict[str, float]
    intervention: dict[str, float]
    target_value: float
    clipped: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "scope_id": self.scope_id,
            "context": self.context,
            "intervention": self.intervention,
            "target_value": self.target_value,
            "clipped": list(self.clipped),
        }


@dataclass
class Trajectory:
    config: dict[str, Any]
    scopes: ScopeSet
    records: list[StepRecord]
    bandit_state: dict[str, Any] | None = None
    wall_time: float = 0.0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.target_value for r in self.records])

    @property
    def scope_ids(self) -> np.ndarray:
        return np.array([r.scope_id for r in self.records], dtype=int)

    def header(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "scopes": self.scopes.names,
            "scope_text": serialize_scopes(self.scopes),
            "bandit": self.bandit_state,
        }


# -- per-scope optimiser ---------------------------------------------------------


class ScopeOptimizer:
    """GP-backed policy for one scope; inputs are ``(x, c)`` scaled to the unit box.

    Interventions are scaled by their domains, contexts by the range of the
    contexts observed under this scope so far.
    """

    def __init__(self, scope: MixedPolicyScope, scm: Scm, settings: GpSettings, rng: np.random.Generator):
        self.scope = scope
        self.settings = settings
        self.rng = rng
        self.xs = scope.interventions
        self.cs = scope.contexts
        self.domains: list[DomainSpec] = [scm.domains[x] for x in self.xs]
        self.x_data: list[np.ndarray] = []
        self.c_data: list[np.ndarray] = []
        self.y_data: list[float] = []
        self.model: GpModel | None = None
        self.hyper: GpHyperparams | None = None
        n0 = max(settings.n_init, 1)
        self._init_design = (
            qmc.Sobol(len(self.xs), scramble=True, seed=rng).random_base2(math.ceil(math.log2(n0)))[:n0]
            if self.xs
            else None
        )

    @property
    def n(self) -> int:
        return len(self.y_data)

    def _c_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.c_data)
        lo, hi = c.min(0), c.max(0)
        width = np.where(hi - lo > 1e-12, hi - lo, 1.0)
        return lo, width

    def _encode(self, x: np.ndarray, c: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        lo = np.array([d.lo for d in self.domains])
        width = np.array([d.width for d in self.domains])
        parts = [(x - lo) / width]
        if self.cs:
            c_lo, c_w = self._c_bounds()
            cz = (np.atleast_2d(c) - c_lo) / c_w
            parts.append(np.broadcast_to(cz, (len(x), len(self.cs))))
        return np.hstack(parts)

    def _random_point(self) -> np.ndarray:
        u = self._init_design[self.n % len(self._init_design)]
        pts = np.array([[d.lo + ui * (d.hi - d.lo) for d, ui in zip(self.domains, u)]])
        return np.array([d.clip(pts[:, j])[0] for j, d in enumerate(self.domains)])

    def incumbent(self) -> tuple[np.ndarray, float]:
        i = int(np.argmax(self.y_data))
        return self.x_data[i], self.y_data[i]

    def decide(self, context: Mapping[str, float]) -> np.ndarray:
        if not self.xs:
            return np.empty(0)
        if self.n < self.settings.n_init or self.model is None:
            return self._random_point()
        c = np.array([context[k] for k in self.cs])
        if self.cs and self.settings.contextual_incumbent:
            # incumbent at this context: the best posterior mean over a fresh quasi-random batch
            probe = acquisition.candidates(self.domains, self.rng, None, n_perturb=0).points
            mu, _ = self.model.predict(self._encode(probe, c))
            i = int(np.argmax(mu))
            x_inc, y_inc = probe[i], float(mu[i])
        else:
            x_inc, y_inc = self.incumbent()
        return acquisition.suggest(
            self.model, c, self.domains, self.rng,
            beta=self.settings.beta, best_y=y_inc, incumbent=x_inc, encode=self._encode,
        )

    def best_ei(self) -> tuple[float, np.ndarray]:
        """Largest EI over a fresh candidate batch and its maximiser (context-free scopes only)."""
        if self.model is None:
            return math.inf, self._random_point()
        x_inc, y_inc = self.incumbent()
        batch = acquisition.candidates(self.domains, self.rng, x_inc)
        mu, var = self.model.predict(self._encode(batch.points, np.empty(0)))
        ei, _, _ = acquisition.acquisition_values(mu, np.sqrt(var), y_inc, self.settings.beta)
        i = int(np.argmax(ei))
        return float(ei[i]), batch.points[i].copy()

    def observe(self, x: np.ndarray, c: np.ndarray, y: float) -> None:
        self.x_data.append(np.asarray(x, dtype=float))
        self.c_data.append(np.asarray(c, dtype=float))
        self.y_data.append(float(y))
        if not self.xs:
            return
        z = self._encode(np.asarray(self.x_data), np.empty(0)) if not self.cs else self._encode_all()
        y_arr = np.asarray(self.y_data)
        s = self.settings
        refit = self.hyper is None or self.n <= s.refit_all_until or self.n % s.refit_period == 0
        if refit:
            self.model = fit(
                z, y_arr, rng=self.rng, n_starts=s.n_starts, n_refine=s.n_refine, maxiter=s.maxiter, init=self.hyper
            )
            self.hyper = self.model.hyperparams
        else:
            self.model = condition(z, y_arr, self.hyper)

    def _encode_all(self) -> np.ndarray:
        x = np.asarray(self.x_data)
        lo = np.array([d.lo for d in self.domains])
        width = np.array([d.width for d in self.domains])
        c_lo, c_w = self._c_bounds()
        return np.hstack([(x - lo) / width, (np.asarray(self.c_data) - c_lo) / c_w])


# -- loops -------------------------------------------------------------------------------


def _streams(seed: int | tuple[int, ...], n_scopes: int) -> tuple[np.random.Generator, np.random.Generator, list]:
    ss = np.random.SeedSequence(seed)
    env_ss, alg_ss, scope_ss = ss.spawn(3)
    scope_rngs = [np.random.default_rng(s) for s in scope_ss.spawn(n_scopes)]
    return np.random.default_rng(env_ss), np.random.default_rng(alg_ss), scope_rngs


def _step(
    cfg: ExperimentConfig, opt: ScopeOptimizer, env_rng: np.random.Generator, t: int, scope_id: int,
    fixed: np.ndarray | None = None,
) -> StepRecord:
    """Run one episode under ``opt``'s scope and feed the outcome back to it."""
    decided: dict[str, np.ndarray] = {}

    def rule(ctx):
        c = {k: float(v[0]) for k, v in ctx.items()}
        x = fixed if fixed is not None else opt.decide(c)
        decided["x"] = np.asarray(x, dtype=float)
        return {name: np.array([v]) for name, v in zip(opt.xs, decided["x"])}

    policy = Policy.joint(opt.scope, rule) if opt.xs else Policy.passive()
    values, clipped = simulate(cfg.scm, policy, 1, env_rng)
    y = float(values[cfg.scm.target][0])
    x_applied = np.array([values[x][0] for x in opt.xs], dtype=float)
    c_obs = np.array([values[c][0] for c in opt.cs], dtype=float)
    opt.observe(x_applied, c_obs, cfg.sign * y)
    return StepRecord(
        t=t,
        scope_id=scope_id,
        context={c: float(v) for c, v in zip(opt.cs, c_obs)},
        intervention={x: float(v) for x, v in zip(opt.xs, x_applied)},
        target_value=y,
        clipped=clipped,
    )


def _check_scopes(cfg: ExperimentConfig) -> None:
    for s in cfg.scopes:
        if not validate_mps(cfg.graph, s):
            raise ScopeError(f"scope {s} is not a valid mixed policy scope for this graph")
        for x in s.interventions:
            if x not in cfg.scm.domains:
                raise ScopeError(f"intervened variable {x!r} has no domain in the SCM")


def _bandit_loop(cfg: ExperimentConfig, use_bandit: bool) -> Trajectory:
    start = time.perf_counter()
    _check_scopes(cfg)
    env_rng, _, scope_rngs = _streams(cfg.seed, len(cfg.scopes))
    opts = [ScopeOptimizer(s, cfg.scm, cfg.gp, r) for s, r in zip(cfg.scopes, scope_rngs)]
    bandit = ScopeBandit(len(opts), cfg.bandit.exploration_c, cfg.bandit.window) if use_bandit else None
    records = []
    for t in range(1, cfg.iterations + 1):
        arm = bandit.select() if bandit is not None else 0
        rec = _step(cfg, opts[arm], env_rng, t, arm)
        if bandit is not None:
            bandit.update(arm, cfg.sign * rec.target_value)
        records.append(rec)
    return Trajectory(
        cfg.echo(), cfg.scopes, records, bandit.to_dict() if bandit is not None else None,
        time.perf_counter() - start,
    )


def run_cocabo(cfg: ExperimentConfig) -> Trajectory:
    """Bandit over scopes, one GP policy optimiser per scope."""
    if cfg.optimizer != "cocabo":
        raise ValueError("run_cocabo needs optimizer='cocabo'")
    return _bandit_loop(cfg, use_bandit=True)


def cobo_scope(g: CausalGraph) -> MixedPolicyScope:
    """Every manipulable variable, each reading every context-only variable it cannot affect.

    Context variables downstream of some manipulable variable are left out:
    reading them would make the joint policy cyclic.
    """
    xs = g.manipulable
    if not xs:
        return MixedPolicyScope()
    g_bar = mutilate(g, MixedPolicyScope.of({x: () for x in xs}))
    down = descendants(g_bar, xs)
    cs = frozenset(c for c in g.names if g.kinds[c] is Kind.CONTEXT and c not in down)
    return MixedPolicyScope(frozenset(ScopePair(x, cs) for x in xs))


def run_cobo(cfg: ExperimentConfig) -> Trajectory:
    """A single fixed scope, no bandit.  ``cfg.scopes`` must hold exactly that scope."""
    if cfg.optimizer != "cobo":
        raise ValueError("run_cobo needs optimizer='cobo'")
    if len(cfg.scopes) != 1:
        raise ValueError("CoBO runs on exactly one scope")
    return _bandit_loop(cfg, use_bandit=False)


def run_cabo(cfg: ExperimentConfig) -> Trajectory:
    """Epsilon-greedy passive observation, otherwise the POMIS and values with the largest EI.

    GPs model interventions only; passive episodes are recorded but not fed
    to any GP.
    """
    if cfg.optimizer != "cabo":
        raise ValueError("run_cabo needs optimizer='cabo'")
    start = time.perf_counter()
    for s in cfg.scopes:
        if s.contexts:
            raise ScopeError(f"CaBO needs context-free scopes; {s} has contexts")
    scopes = cfg.scopes
    passive = MixedPolicyScope()
    if passive not in scopes:
        scopes = ScopeSet(scopes.scopes + (passive,), origin=scopes.origin)
    cfg = ExperimentConfig(**{**cfg.__dict__, "scopes": scopes})
    _check_scopes(cfg)
    env_rng, alg_rng, scope_rngs = _streams(cfg.seed, len(scopes))
    opts = [ScopeOptimizer(s, cfg.scm, cfg.gp, r) for s, r in zip(scopes, scope_rngs)]
    passive_id = scopes.index(passive)
    arms = [i for i, s in enumerate(scopes) if not s.is_passive]
    records = []
    for t in range(1, cfg.iterations + 1):
        if not arms or alg_rng.random() < cfg.cabo_epsilon:
            values, clipped = simulate(cfg.scm, Policy.passive(), 1, env_rng)
            records.append(StepRecord(t, passive_id, {}, {}, float(values[cfg.scm.target][0]), clipped))
            continue
        cold = [i for i in arms if opts[i].n < cfg.gp.n_init]
        if cold:
            arm, x = cold[0], None
        else:
            best = [(opts[i].best_ei(), i) for i in arms]
            (ei, x), arm = max(best, key=lambda b: (b[0][0], -b[1]))
        records.append(_step(cfg, opts[arm], env_rng, t, arm, fixed=x))
    return Trajectory(cfg.echo(), scopes, records, None, time.perf_counter() - start)


def run(cfg: ExperimentConfig) -> Trajectory:
    return {"cocabo": run_cocabo, "cabo": run_cabo, "cobo": run_cobo}[cfg.optimizer](cfg)
