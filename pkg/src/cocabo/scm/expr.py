"""Expression language for structural equations.

Grammar (loosest binding first)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | primary
    primary := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

Functions: ``exp cos abs sigmoid pow``.  ``normal(mu, sd)`` and
``uniform(lo, hi)`` are inline noise terms: each occurrence draws fresh,
independent noise for every sample.  Evaluation is vectorised over samples.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Union

import numpy as np
from scipy.special import expit

__all__ = [
    "ScmSyntaxError",
    "Num",
    "Ref",
    "Neg",
    "BinOp",
    "Call",
    "Noise",
    "Expr",
    "parse_expression",
    "evaluate",
    "references",
    "FUNCTIONS",
]


class ScmSyntaxError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else (f"column {column}: " if column else "")
        super().__init__(where + message)


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Noise:
    kind: str
    args: tuple["Expr", "Expr"]


Expr = Union[Num, Ref, Neg, BinOp, Call, Noise]

FUNCTIONS: dict[str, tuple[int, Callable[..., np.ndarray]]] = {
    "exp": (1, np.exp),
    "cos": (1, np.cos),
    "abs": (1, np.abs),
    "sigmoid": (1, expit),
    "pow": (2, np.power),
}
NOISE = ("normal", "uniform")

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/(),]))"
)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(src: str, line: int, col0: int) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if not m:
            bad = len(src) - len(src[pos:].lstrip()) if src[pos:].strip() else pos
            raise ScmSyntaxError(f"unexpected character {src[bad]!r}", line, col0 + bad + 1)
        kind = m.lastgroup
        assert kind is not None
        toks.append(_Tok(kind, m.group(kind), col0 + m.start(kind) + 1))
        pos = m.end()
    toks.append(_Tok("end", "", col0 + len(src) + 1))
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok], line: int):
        self.toks = toks
        self.i = 0
        self.line = line

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: _Tok | None = None) -> ScmSyntaxError:
        tok = tok or self.peek()
        return ScmSyntaxError(msg, self.line, tok.col)

    def expect(self, text: str) -> None:
        t = self.take()
        if t.text != text:
            raise self.error(f"expected {text!r}, found {t.text or 'end of input'!r}", t)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self.peek().text == "-":
            self.take()
            return Neg(self.unary())
        return self.primary()

    def primary(self) -> Expr:
        t = self.take()
        if t.kind == "num":
            return Num(float(t.text))
        if t.kind == "name":
            if self.peek().text != "(":
                return Ref(t.text)
            self.take()
            args = [self.expr()]
            while self.peek().text == ",":
                self.take()
                args.append(self.expr())
            self.expect(")")
            if t.text in NOISE:
                if len(args) != 2:
                    raise self.error(f"{t.text}() takes 2 arguments", t)
                return Noise(t.text, (args[0], args[1]))
            if t.text not in FUNCTIONS:
                raise self.error(f"unknown function {t.text!r}", t)
            arity = FUNCTIONS[t.text][0]
            if len(args) != arity:
                raise self.error(f"{t.text}() takes {arity} argument(s), got {len(args)}", t)
            return Call(t.text, tuple(args))
        if t.text == "(":
            node = self.expr()
            self.expect(")")
            return node
        raise self.error(f"unexpected {t.text or 'end of input'!r}", t)


def parse_expression(src: str, line: int = 0, column: int = 0) -> Expr:
    """Parse ``src``; ``line``/``column`` locate it inside a larger document for error messages."""
    p = _Parser(_tokenize(src, line, column), line)
    node = p.expr()
    if p.peek().kind != "end":
        raise p.error(f"unexpected {p.peek().text!r}")
    return node


def references(e: Expr) -> Iterator[str]:
    """Variable names referenced by ``e``, in evaluation order (with repeats)."""
    if isinstance(e, Ref):
        yield e.name
    elif isinstance(e, Neg):
        yield from references(e.operand)
    elif isinstance(e, BinOp):
        yield from references(e.left)
        yield from references(e.right)
    elif isinstance(e, (Call, Noise)):
        for a in e.args:
            yield from references(a)


def evaluate(e: Expr, env: Mapping[str, np.ndarray], rng: np.random.Generator, n: int) -> np.ndarray:
    """Evaluate ``e`` for ``n`` samples; noise terms consume ``rng`` left to right."""
    if isinstance(e, Num):
        return np.full(n, e.value)
    if isinstance(e, Ref):
        return env[e.name]
    if isinstance(e, Neg):
        return -evaluate(e.operand, env, rng, n)
    if isinstance(e, BinOp):
        a = evaluate(e.left, env, rng, n)
        b = evaluate(e.right, env, rng, n)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Call):
        return FUNCTIONS[e.func][1](*(evaluate(a, env, rng, n) for a in e.args))
    if isinstance(e, Noise):
        a = evaluate(e.args[0], env, rng, n)
        b = evaluate(e.args[1], env, rng, n)
        if e.kind == "normal":
            return a + b * rng.standard_normal(n)
        return a + (b - a) * rng.random(n)
    raise TypeError(f"not an expression node: {e!r}")


def format_expression(e: Expr) -> str:
    """Fully parenthesised text that parses back to an equal tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Neg):
        return f"-({format_expression(e.operand)})"
    if isinstance(e, BinOp):
        return f"({format_expression(e.left)} {e.op} {format_expression(e.right)})"
    if isinstance(e, (Call, Noise)):
        name = e.func if isinstance(e, Call) else e.kind
        return f"{name}({', '.join(format_expression(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")
