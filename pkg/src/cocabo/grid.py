"""Experiment grids: benchmark x optimizer x seed, with regret and frequency exports.

Config (YAML)::

    base_seed: 0
    seeds: 10               # a count, or an explicit list of seed indices
    iterations: 300
    workers: 1
    optimizers: [cocabo, cobo]
    gp: {n_init: 2}
    bandit: {exploration_c: 1.4142}
    cabo_epsilon: 0.1
    benchmarks:
      - name: toy           # builtin benchmark
      - name: mine          # user system
        graph: my.graph
        scm: my.scm
        objective: maximise
        mu_star: 0.5        # omit to disable regret reporting
        scopes: {cocabo: enumerate}

Per-benchmark keys override the top-level ones.  Scope sources are
``fixture:<name>``, ``file:<path>`` or ``enumerate`` (with optional
``max_context`` and ``max_interventions``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import metrics
from .benchmarks import BENCHMARKS, builtin
from .engine import OPTIMIZERS, BanditSettings, ExperimentConfig, GpSettings, Trajectory, cobo_scope, run
from .graph import CausalGraph, parse_graph
from .scm import Scm, parse_scm
from .scopes import ScopeSet, enumerate_scopes, load_fixture, parse_scopes

logger = logging.getLogger(__name__)

__all__ = ["ConfigError", "GridConfig", "Cell", "load_config", "cell_seed", "run_grid", "resolve_scopes"]

WORKERS_ENV = "COCABO_WORKERS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    graph_path: str | None = None
    scm_path: str | None = None
    objective: str | None = None
    mu_star: float | None = None
    scopes: dict[str, Any] = field(default_factory=dict)
    optimizers: tuple[str, ...] | None = None
    overrides: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class GridConfig:
    benchmarks: tuple[BenchmarkSpec, ...]
    optimizers: tuple[str, ...]
    seeds: tuple[int, ...]
    iterations: int
    base_seed: int = 0
    workers: int = 1
    settings: dict[str, Any] = field(default_factory=dict)
    root: str = "."


@dataclass(frozen=True)
class Cell:
    benchmark: BenchmarkSpec
    optimizer: str
    seed_index: int
    iterations: int
    base_seed: int
    settings: dict[str, Any]
    root: str

    @property
    def stem(self) -> str:
        return f"{self.benchmark.name}__{self.optimizer}__seed{self.seed_index}"


def _seeds(value: Any) -> tuple[int, ...]:
    if isinstance(value, bool):
        raise ConfigError("seeds must be a count or a list of integers")
    if isinstance(value, int):
        if value < 1:
            raise ConfigError("seed count must be >= 1")
        return tuple(range(value))
    if isinstance(value, list):
        if not value:
            raise ConfigError("seed list is empty")
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError("seed list must hold integers")
        if len(set(value)) != len(value):
            raise ConfigError("duplicate seeds")
        return tuple(value)
    raise ConfigError("seeds must be a count or a list of integers")


_SETTING_KEYS = ("gp", "bandit", "cabo_epsilon", "max_context", "max_interventions")


def load_config(path: str | os.PathLike, seeds: int | None = None, iterations: int | None = None,
                workers: int | None = None) -> GridConfig:
    p = Path(path)
    try:
        raw = yaml.safe_load(p.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return config_from_dict(raw, root=str(p.parent), seeds=seeds, iterations=iterations, workers=workers)


def config_from_dict(raw: Any, root: str = ".", seeds: int | None = None, iterations: int | None = None,
                     workers: int | None = None) -> GridConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    known = {"base_seed", "seeds", "iterations", "workers", "optimizers", "benchmarks", *_SETTING_KEYS}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    seed_tuple = _seeds(seeds if seeds is not None else raw.get("seeds", 10))
    iters = int(iterations if iterations is not None else raw.get("iterations", 300))
    if iters < 1:
        raise ConfigError("iterations must be >= 1")
    opts = tuple(raw.get("optimizers", ["cocabo"]))
    for o in opts:
        if o not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {o!r}")
    benches = raw.get("benchmarks")
    if not benches:
        raise ConfigError("config lists no benchmarks")
    specs = []
    for b in benches:
        if isinstance(b, str):
            b = {"name": b}
        if not isinstance(b, dict) or "name" not in b:
            raise ConfigError("each benchmark needs a name")
        name = str(b["name"])
        if name not in BENCHMARKS and not ("graph" in b and "scm" in b):
            raise ConfigError(f"benchmark {name!r} is not builtin and has no graph/scm files")
        b_opts = tuple(b["optimizers"]) if "optimizers" in b else None
        for o in b_opts or ():
            if o not in OPTIMIZERS:
                raise ConfigError(f"unknown optimizer {o!r}")
        specs.append(
            BenchmarkSpec(
                name=name,
                graph_path=b.get("graph"),
                scm_path=b.get("scm"),
                objective=b.get("objective"),
                mu_star=b.get("mu_star"),
                scopes=dict(b.get("scopes", {})),
                optimizers=b_opts,
                overrides={k: b[k] for k in _SETTING_KEYS if k in b},
            )
        )
    if workers is None:
        workers = int(raw.get("workers", os.environ.get(WORKERS_ENV, 1)))
    return GridConfig(
        benchmarks=tuple(specs),
        optimizers=opts,
        seeds=seed_tuple,
        iterations=iters,
        base_seed=int(raw.get("base_seed", 0)),
        workers=max(1, workers),
        settings={k: raw[k] for k in _SETTING_KEYS if k in raw},
        root=root,
    )


def cell_seed(base_seed: int, benchmark: str, optimizer: str, seed_index: int) -> tuple[int, ...]:
    """Entropy for a cell's random streams, hashed from its grid coordinates."""
    digest = hashlib.sha256(f"{base_seed}|{benchmark}|{optimizer}|{seed_index}".encode()).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


# -- resolution -------------------------------------------------------------------


@dataclass(frozen=True)
class System:
    graph: CausalGraph
    scm: Scm
    objective: str
    mu_star: float | None
    pomps_fixture: str | None
    pomis_fixture: str | None


def _system(spec: BenchmarkSpec, root: str) -> System:
    if spec.graph_path is None and spec.name in BENCHMARKS:
        b = builtin(spec.name)
        return System(b.graph, b.scm, spec.objective or b.objective,
                      b.mu_star if spec.mu_star is None else float(spec.mu_star), b.pomps_fixture, b.pomis_fixture)
    base = Path(root)
    g = parse_graph((base / spec.graph_path).read_text(encoding="utf-8"))
    scm = parse_scm((base / spec.scm_path).read_text(encoding="utf-8"))
    return System(g, scm, spec.objective or "maximise",
                  None if spec.mu_star is None else float(spec.mu_star), None, None)


def resolve_scopes(system: System, optimizer: str, source: Any, settings: dict[str, Any], root: str) -> ScopeSet:
    if optimizer == "cobo":
        return ScopeSet((cobo_scope(system.graph),))
    if source is None:
        fixture = system.pomps_fixture if optimizer == "cocabo" else system.pomis_fixture
        source = f"fixture:{fixture}" if fixture else "enumerate"
    source = str(source)
    if source.startswith("fixture:"):
        return load_fixture(source.split(":", 1)[1])
    if source.startswith("file:"):
        return parse_scopes((Path(root) / source.split(":", 1)[1]).read_text(encoding="utf-8"), origin="user")
    if source == "enumerate":
        max_context = 0 if optimizer == "cabo" else int(settings.get("max_context", 2))
        mi = settings.get("max_interventions", 2)
        logger.warning("no scope fixture; enumerating candidate scopes (may include scopes that are not possibly optimal)")
        return enumerate_scopes(system.graph, max_context=max_context, max_interventions=mi)
    raise ConfigError(f"unknown scope source {source!r}")


def _merged(base: dict[str, Any], over: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for k, v in over.items():
        out[k] = {**out.get(k, {}), **v} if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def build_experiment(cell: Cell) -> tuple[ExperimentConfig, System]:
    system = _system(cell.benchmark, cell.root)
    settings = cell.settings
    scopes = resolve_scopes(system, cell.optimizer, cell.benchmark.scopes.get(cell.optimizer), settings, cell.root)
    try:
        gp = GpSettings(**settings.get("gp", {}))
        bandit = BanditSettings(**settings.get("bandit", {}))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg = ExperimentConfig(
        graph=system.graph,
        scm=system.scm,
        scopes=scopes,
        optimizer=cell.optimizer,
        iterations=cell.iterations,
        seed=cell_seed(cell.base_seed, cell.benchmark.name, cell.optimizer, cell.seed_index),
        objective=system.objective,
        gp=gp,
        bandit=bandit,
        cabo_epsilon=float(settings.get("cabo_epsilon", 0.1)),
        label=cell.stem,
    )
    return cfg, system


def _run_cell(cell: Cell) -> dict[str, Any]:
    try:
        cfg, _ = build_experiment(cell)
        tr = run(cfg)
    except Exception as exc:  # recorded; the rest of the grid keeps going
        logger.exception("cell %s failed", cell.stem)
        return {"stem": cell.stem, "error": f"{type(exc).__name__}: {exc}"}
    return {"stem": cell.stem, "trajectory": tr}


def trajectory_jsonl(tr: Trajectory) -> str:
    lines = [json.dumps(tr.header(), sort_keys=True)]
    lines += [json.dumps(r.to_dict(), sort_keys=True) for r in tr.records]
    return "\n".join(lines) + "\n"


def cells(cfg: GridConfig) -> list[Cell]:
    out = []
    for b in cfg.benchmarks:
        settings = _merged(cfg.settings, b.overrides)
        for opt in b.optimizers or cfg.optimizers:
            for k in cfg.seeds:
                out.append(Cell(b, opt, k, cfg.iterations, cfg.base_seed, settings, cfg.root))
    return out


def run_grid(cfg: GridConfig, out_dir: str | os.PathLike) -> dict[str, Any]:
    """Run every cell, write trajectories, CSVs and ``summary.json``; returns the summary."""
    out = Path(out_dir)
    for sub in ("trajectories", "regret", "selection"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    all_cells = cells(cfg)
    start = time.perf_counter()
    if cfg.workers > 1 and len(all_cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell, all_cells))
    else:
        results = [_run_cell(c) for c in all_cells]

    by_group: dict[tuple[str, str], list[tuple[Cell, Trajectory]]] = {}
    failures = []
    for cell, res in zip(all_cells, results):
        if "error" in res:
            failures.append({"cell": res["stem"], "error": res["error"]})
            continue
        tr = res["trajectory"]
        (out / "trajectories" / f"{cell.stem}.jsonl").write_text(trajectory_jsonl(tr), encoding="utf-8")
        by_group.setdefault((cell.benchmark.name, cell.optimizer), []).append((cell, tr))

    runs = []
    for (bname, opt), members in by_group.items():
        cell0 = members[0][0]
        system = _system(cell0.benchmark, cell0.root)
        trs = [tr for _, tr in members]
        names = trs[0].scopes.names
        freqs = [metrics.selection_frequency(tr.scope_ids, len(names)) for tr in trs]
        freq_mean = np.mean(np.sort(np.stack(freqs), axis=0), axis=0)
        stem = f"{bname}__{opt}"
        (out / "selection" / f"{stem}.csv").write_text(metrics.frequency_csv(freq_mean, names), encoding="utf-8")
        entry: dict[str, Any] = {
            "benchmark": bname,
            "optimizer": opt,
            "seeds": [c.seed_index for c, _ in members],
            "iterations": cfg.iterations,
            "scopes": names,
            "final_selection_frequency": dict(zip(names, map(float, freq_mean[-1]))),
            "wall_time": sum(tr.wall_time for tr in trs),
        }
        if system.mu_star is None:
            logger.warning("no optimum known for %s; regret reporting disabled", bname)
            entry["regret"] = None
        else:
            series = [metrics.compute_regret(tr.y, system.mu_star, system.objective).normalised for tr in trs]
            band = metrics.aggregate(series)
            (out / "regret" / f"{stem}.csv").write_text(metrics.regret_csv(band), encoding="utf-8")
            entry["mu_star"] = system.mu_star
            entry["regret"] = {
                "final_mean": float(band.mean[-1]),
                "final_ci_low": float(band.low[-1]),
                "final_ci_high": float(band.high[-1]),
            }
        runs.append(entry)

    summary = {"runs": runs, "failures": failures, "cells": len(all_cells), "wall_time": time.perf_counter() - start}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary
