"""Command-line entry point: ``cocabo run | graph pomps | scm check | fixtures list``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .benchmarks import BENCHMARKS, GRAPHS, builtin_scm_text
from .graph import GraphError, parse_graph
from .grid import ConfigError, load_config, run_grid
from .scm import ScmSyntaxError, estimate_expectation, parse_policy, parse_scm
from .scopes import FIXTURES, ScopeError, enumerate_scopes, load_fixture, serialize_scopes

__all__ = ["main", "build_parser"]


def _read_or_builtin(value: str, builtins: dict, loader) -> str:
    p = Path(value)
    if p.is_file():
        return p.read_text(encoding="utf-8")
    if value in builtins:
        return loader(value)
    raise FileNotFoundError(f"{value!r} is neither a file nor a builtin name ({', '.join(sorted(builtins))})")


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, seeds=args.seeds, iterations=args.iters, workers=args.workers)
    summary = run_grid(cfg, args.out)
    for r in summary["runs"]:
        reg = r["regret"]
        tail = f"R_bar_T={reg['final_mean']:.4f} [{reg['final_ci_low']:.4f}, {reg['final_ci_high']:.4f}]" if reg else "regret n/a"
        print(f"{r['benchmark']:>20} {r['optimizer']:>7}  seeds={len(r['seeds'])}  {tail}")
    for f in summary["failures"]:
        print(f"FAILED {f['cell']}: {f['error']}", file=sys.stderr)
    return 1 if summary["failures"] else 0


def _cmd_graph_pomps(args: argparse.Namespace) -> int:
    text = _read_or_builtin(args.graph, GRAPHS, lambda n: GRAPHS[n]())
    g = parse_graph(text)
    scopes = enumerate_scopes(g, max_context=args.max_context, max_interventions=args.max_interventions)
    sys.stdout.write(serialize_scopes(scopes))
    print(f"# {len(scopes)} scopes", file=sys.stderr)
    return 0


def _cmd_scm_check(args: argparse.Namespace) -> int:
    scm = parse_scm(_read_or_builtin(args.scm, BENCHMARKS, builtin_scm_text))
    policy = parse_policy(Path(args.policy).read_text(encoding="utf-8")) if args.policy else parse_policy("")
    mean, se = estimate_expectation(scm, policy, args.n, np.random.default_rng(args.seed))
    print(f"{scm.target} mean = {mean:.6f} +/- {se:.6f} (n={args.n})")
    return 0


def _cmd_fixtures_list(args: argparse.Namespace) -> int:
    for name in sorted(FIXTURES):
        print(f"{name}\tgraph={FIXTURES[name]}\tscopes={len(load_fixture(name))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cocabo", description="Causal contextual Bayesian optimisation benchmarks")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment grid")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--seeds", type=int)
    run.add_argument("--iters", type=int)
    run.add_argument("--workers", type=int)
    run.set_defaults(func=_cmd_run)

    graph = sub.add_parser("graph", help="causal graph tools").add_subparsers(dest="graph_command", required=True)
    pomps = graph.add_parser("pomps", help="enumerate candidate policy scopes")
    pomps.add_argument("--graph", required=True, help="graph file or builtin graph name")
    pomps.add_argument("--max-context", type=int, default=2)
    pomps.add_argument("--max-interventions", type=int, default=2)
    pomps.set_defaults(func=_cmd_graph_pomps)

    scm = sub.add_parser("scm", help="structural causal model tools").add_subparsers(dest="scm_command", required=True)
    check = scm.add_parser("check", help="Monte Carlo estimate of the target mean under a policy")
    check.add_argument("--scm", required=True, help="SCM file or builtin benchmark name")
    check.add_argument("--policy", help="scope file with '= <expression>' rules; omit for passive")
    check.add_argument("--n", type=int, default=100_000)
    check.add_argument("--seed", type=int, default=0)
    check.set_defaults(func=_cmd_scm_check)

    fixtures = sub.add_parser("fixtures", help="bundled scope fixtures").add_subparsers(dest="fixtures_command", required=True)
    lst = fixtures.add_parser("list", help="list fixtures")
    lst.set_defaults(func=_cmd_fixtures_list)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GraphError, ScmSyntaxError, ScopeError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
