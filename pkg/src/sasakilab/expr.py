"""Expression language for embedding maps and normal scalings.

Grammar (whitespace insignificant)::

    expr   := term (("+" | "-") term)*
    term   := factor (("*" | "/") factor)*
    factor := "-" factor | power
    power  := atom ("^" ["-" | "+"] integer)?
    atom   := number | ident | func "(" expr ")" | "(" expr ")"

``^`` binds tighter than unary minus, so ``-s1^2`` is ``-(s1^2)``.
Identifiers are the parameters ``s1 .. sN`` and the constants ``pi``
and ``e``; functions are sin cos tan exp log sqrt sinh cosh tanh.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import numkit as nk
from .errors import ConfigError, NumericError

CONSTANTS = {"pi": float(np.pi), "e": float(np.e)}
FUNCTION_NAMES = tuple(nk.FUNCTIONS)


class ExpressionSyntaxError(ConfigError):
    def __init__(self, message: str, line: int, column: int, expected: frozenset[str]):
        self.line = line
        self.column = column
        self.expected = expected
        exp = ", ".join(sorted(expected))
        super().__init__(f"{line}:{column}: {message} (expected one of: {exp})")


class UnknownIdentifierError(ConfigError):
    def __init__(self, name: str, line: int, column: int, valid: tuple[str, ...]):
        self.name = name
        self.line = line
        self.column = column
        self.valid = valid
        super().__init__(
            f"{line}:{column}: unknown identifier {name!r}; valid parameters: {', '.join(valid)}")


# -- syntax tree ------------------------------------------------------------

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Const, Neg, BinOp, Pow, Call]


# -- lexer ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)"
    r"|(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)


@dataclass(frozen=True)
class _Tok:
    kind: str  # number, ident, op, end
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", line, col,
                                        frozenset({"number", "identifier", "operator"}))
        kind = m.lastgroup
        if kind == "ws":
            chunk = m.group()
            nl = chunk.count("\n")
            if nl:
                line += nl
                line_start = pos + chunk.rfind("\n") + 1
        else:
            toks.append(_Tok(kind, m.group(), line, col))
        pos = m.end()
    toks.append(_Tok("end", "", line, pos - line_start + 1))
    return toks


_ATOM_START = frozenset({"number", "identifier", "function", "(", "-"})


class _Parser:
    def __init__(self, text: str, params: tuple[str, ...] | None):
        self.toks = _tokenize(text)
        self.i = 0
        self.params = params

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def take(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, tok: _Tok, expected):
        what = "end of input" if tok.kind == "end" else repr(tok.text)
        raise ExpressionSyntaxError(f"unexpected {what}", tok.line, tok.column, frozenset(expected))

    def expect_op(self, text: str):
        tok = self.take()
        if tok.kind != "op" or tok.text != text:
            self.fail(tok, {text})
        return tok

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            self.fail(tok, {"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.take().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.take()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.take()
            sign = 1
            tok = self.peek()
            if tok.kind == "op" and tok.text in "+-":
                sign = -1 if self.take().text == "-" else 1
                tok = self.peek()
            if tok.kind != "number" or not tok.text.isdigit():
                self.fail(tok, {"integer"})
            self.take()
            return Pow(base, sign * int(tok.text))
        return base

    def atom(self) -> Node:
        tok = self.take()
        if tok.kind == "number":
            return Num(float(tok.text))
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if tok.kind == "ident":
            name = tok.text
            if name in nk.FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(name, arg)
            if name in CONSTANTS:
                return Const(name)
            if self.params is None:
                if re.fullmatch(r"s[1-9]\d*", name):
                    return Var(name)
                raise UnknownIdentifierError(name, tok.line, tok.column, ("s1", "s2", "..."))
            if name in self.params:
                return Var(name)
            raise UnknownIdentifierError(name, tok.line, tok.column, self.params)
        self.fail(tok, _ATOM_START)


def parse_expression(text: str, params: tuple[str, ...] | int | None = None) -> Node:
    """Parse ``text`` into a syntax tree.

    ``params`` restricts the admissible parameter names; an integer ``m``
    means ``s1 .. sm``.  ``None`` accepts any ``s<k>``.
    """
    if isinstance(params, int):
        params = tuple(f"s{i + 1}" for i in range(params))
    return _Parser(text, params).parse()


# -- printing ---------------------------------------------------------------

def _prec(node: Node) -> int:
    if isinstance(node, BinOp):
        return 1 if node.op in "+-" else 2
    if isinstance(node, Neg):
        return 3
    if isinstance(node, Pow):
        return 4
    return 5


def to_string(node: Node) -> str:
    """Canonical text with the minimal parentheses needed to re-parse."""
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, (Var, Const)):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if isinstance(node, Neg):
        inner = to_string(node.operand)
        return "-" + (f"({inner})" if _prec(node.operand) < 3 else inner)
    if isinstance(node, Pow):
        base = to_string(node.base)
        if _prec(node.base) < 5:
            base = f"({base})"
        return f"{base}^{node.exponent}"
    lvl = _prec(node)
    left = to_string(node.left)
    if _prec(node.left) < lvl:
        left = f"({left})"
    right = to_string(node.right)
    if _prec(node.right) <= lvl:
        right = f"({right})"
    if node.op in "+-":
        return f"{left} {node.op} {right}"
    return f"{left}{node.op}{right}"


# -- evaluation -------------------------------------------------------------

def evaluate(node: Node, env: dict):
    """Evaluate over floats, arrays or jets (values taken from ``env``).

    Raises NumericError as soon as any subexpression is non-finite.
    """
    with np.errstate(all="ignore"):
        return _eval(node, env)


def _eval(node: Node, env: dict):
    out = _eval_node(node, env)
    if not np.all(np.isfinite(nk.value(out))):
        raise NumericError(f"non-finite value evaluating {to_string(node)}")
    return out


def _eval_node(node: Node, env: dict):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Const):
        return np.float64(CONSTANTS[node.name])
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Pow):
        base = _eval(node.base, env)
        if isinstance(base, nk.Jet):
            return base**node.exponent
        return np.asarray(base, dtype=float) ** float(node.exponent)
    if isinstance(node, Call):
        return nk.FUNCTIONS[node.func](_eval(node.arg, env))
    a, b = _eval(node.left, env), _eval(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    return a / b


def variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Neg, Call)):
        return variables(node.operand if isinstance(node, Neg) else node.arg)
    if isinstance(node, Pow):
        return variables(node.base)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set()


class Expression:
    """A parsed expression bound to the parameters ``s1 .. s_m``."""

    def __init__(self, text: str, nparams: int):
        self.text = text
        self.nparams = nparams
        self.params = tuple(f"s{i + 1}" for i in range(nparams))
        self.tree = parse_expression(text, self.params)

    def __repr__(self):
        return f"Expression({to_string(self.tree)!r})"

    def env(self, coords) -> dict:
        return dict(zip(self.params, coords))

    def __call__(self, coords):
        """Evaluate on a list of parameter scalars (floats, arrays, jets)."""
        return evaluate(self.tree, self.env(coords))

    def values(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = self([s[..., i] for i in range(self.nparams)])
        return np.broadcast_to(nk.value(out), s.shape[:-1])
