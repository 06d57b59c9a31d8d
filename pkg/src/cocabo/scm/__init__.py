"""Structural causal models: equation language, parsing and simulation."""

from .expr import (
    BinOp,
    Call,
    Expr,
    Neg,
    Noise,
    Num,
    Ref,
    ScmSyntaxError,
    evaluate,
    format_expression,
    parse_expression,
    references,
)
from .model import (
    DomainSpec,
    ExogenousSpec,
    Policy,
    PolicyOrderError,
    Record,
    Scm,
    estimate_expectation,
    parse_policy,
    parse_scm,
    sample,
    simulate,
)

__all__ = [
    "BinOp",
    "Call",
    "Expr",
    "Neg",
    "Noise",
    "Num",
    "Ref",
    "ScmSyntaxError",
    "evaluate",
    "format_expression",
    "parse_expression",
    "references",
    "DomainSpec",
    "ExogenousSpec",
    "Policy",
    "PolicyOrderError",
    "Record",
    "Scm",
    "estimate_expectation",
    "parse_policy",
    "parse_scm",
    "sample",
    "simulate",
]
