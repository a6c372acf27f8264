"""Small arithmetic expression language used by problem files.

Formulas such as ``"-0.76*y/(y+0.03) + 0.5*w"`` are parsed into an immutable
AST and evaluated either on Python floats or elementwise on numpy arrays.
The grammar is documented in ``docs/GRAMMAR``.

Precedence, loosest first: ``+ -``, ``* /``, unary ``-``/``+``, ``^``.
``^`` is right-associative and binds tighter than unary minus, so ``-x^2``
means ``-(x^2)`` and ``2^-1`` is accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ExprDomainError",
    "Num",
    "Var",
    "Unary",
    "Binary",
    "Call",
    "Expression",
    "parse",
    "evaluate",
    "to_text",
    "variables",
    "FUNCTIONS",
]


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, text: str = ""):
        self.offset = offset
        self.text = text
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ExprDomainError(ExprError):
    """Evaluation left the real domain (0 division, log of <= 0, overflow...)."""

    def __init__(self, message: str, subexpr: "Node"):
        self.subexpr = subexpr
        super().__init__(f"{message} in '{to_text(subexpr)}'")


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Node = Union[Num, Var, Unary, Binary, Call]

# name -> arity
FUNCTIONS = {
    "sin": 1,
    "cos": 1,
    "exp": 1,
    "log": 1,
    "sqrt": 1,
    "abs": 1,
    "pow": 2,
    "min": 2,
    "max": 2,
}


@dataclass(frozen=True)
class Expression:
    """A parsed formula together with the variable names it may use."""

    root: Node
    vars: tuple
    source: str = ""

    def __call__(self, **bindings):
        return evaluate(self, bindings)

    def __str__(self) -> str:
        return to_text(self.root)


# --------------------------------------------------------------------------
# tokenizer

_NUM, _IDENT, _OP, _END = "num", "ident", "op", "end"
_OPS = set("+-*/^(),")


def _tokenize(text: str):
    toks = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            start = i
            while i < n and text[i].isdigit():
                i += 1
            if i < n and text[i] == ".":
                i += 1
                while i < n and text[i].isdigit():
                    i += 1
            if i < n and text[i] in "eE":
                j = i + 1
                if j < n and text[j] in "+-":
                    j += 1
                if j < n and text[j].isdigit():
                    i = j
                    while i < n and text[i].isdigit():
                        i += 1
            value = float(text[start:i])
            if not math.isfinite(value):
                raise ExprSyntaxError("numeric literal out of range", start, text)
            toks.append((_NUM, value, start))
        elif c.isalpha() or c == "_":
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            toks.append((_IDENT, text[start:i], start))
        elif c in _OPS:
            toks.append((_OP, c, i))
            i += 1
        else:
            raise ExprSyntaxError(f"unexpected character {c!r}", i, text)
    toks.append((_END, None, n))
    return toks


class _Parser:
    def __init__(self, text: str, names: Sequence[str]):
        self.text = text
        self.names = set(names)
        self.toks = _tokenize(text)
        self.pos = 0

    def peek(self):
        return self.toks[self.pos]

    def advance(self):
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ExprSyntaxError(message, tok[2], self.text)

    def expect(self, op):
        tok = self.peek()
        if tok[0] != _OP or tok[1] != op:
            raise self.error(f"expected {op!r}")
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != _END:
            raise self.error("unexpected token")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] == _OP and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[0] == _OP and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = Binary(op, node, self.unary())
        return node

    def unary(self) -> Node:
        tok = self.peek()
        if tok[0] == _OP and tok[1] in "+-":
            self.advance()
            return Unary(tok[1], self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        tok = self.peek()
        if tok[0] == _OP and tok[1] == "^":
            self.advance()
            return Binary("^", base, self.unary())
        return base

    def atom(self) -> Node:
        tok = self.advance()
        kind, val, _ = tok
        if kind == _NUM:
            return Num(val)
        if kind == _IDENT:
            nxt = self.peek()
            if nxt[0] == _OP and nxt[1] == "(":
                if val not in FUNCTIONS:
                    raise UnknownIdentifierError(f"unknown function {val!r}", tok[2], self.text)
                self.advance()
                args = [self.expr()]
                while self.peek()[0] == _OP and self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                self.expect(")")
                if len(args) != FUNCTIONS[val]:
                    raise ExprSyntaxError(
                        f"{val} takes {FUNCTIONS[val]} argument(s), got {len(args)}", tok[2], self.text
                    )
                return Call(val, tuple(args))
            if val not in self.names:
                raise UnknownIdentifierError(f"unknown identifier {val!r}", tok[2], self.text)
            return Var(val)
        if kind == _OP and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == _END:
            raise self.error("unexpected end of input", tok)
        raise self.error(f"unexpected {val!r}", tok)


def parse(text: str, vars: Sequence[str]) -> Expression:
    """Parse ``text`` allowing only the identifiers in ``vars``.

    Raises ExprSyntaxError (with ``.offset``) on malformed input and
    UnknownIdentifierError for undeclared names or functions.
    """
    if not isinstance(text, str) or not text.strip():
        raise ExprSyntaxError("empty expression", 0, text if isinstance(text, str) else "")
    try:
        root = _Parser(text, vars).parse()
    except RecursionError:
        raise ExprSyntaxError("expression nested too deeply", 0, text) from None
    return Expression(root, tuple(vars), text)


# --------------------------------------------------------------------------
# printing


def to_text(node) -> str:
    """Render a node; every compound subterm is parenthesized so that
    re-parsing reproduces the same tree."""
    if isinstance(node, Expression):
        node = node.root
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        return f"({node.op}{to_text(node.operand)})"
    if isinstance(node, Binary):
        return f"({to_text(node.left)}{node.op}{to_text(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({','.join(to_text(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables(node) -> set:
    if isinstance(node, Expression):
        node = node.root
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Unary):
        return variables(node.operand)
    if isinstance(node, Binary):
        return variables(node.left) | variables(node.right)
    if isinstance(node, Call):
        out = set()
        for a in node.args:
            out |= variables(a)
        return out
    return set()


# --------------------------------------------------------------------------
# evaluation


def _check(value, node):
    if not np.all(np.isfinite(value)):
        raise ExprDomainError("non-finite result", node)
    return value


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Unary):
        v = _eval(node.operand, env)
        return -v if node.op == "-" else v
    if isinstance(node, Binary):
        a = _eval(node.left, env)
        b = _eval(node.right, env)
        op = node.op
        if op == "+":
            return _check(np.add(a, b), node)
        if op == "-":
            return _check(np.subtract(a, b), node)
        if op == "*":
            return _check(np.multiply(a, b), node)
        if op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExprDomainError("division by zero", node)
            return _check(np.divide(a, b), node)
        return _check(_power(a, b, node), node)
    if isinstance(node, Call):
        args = [_eval(a, env) for a in node.args]
        name = node.name
        if name == "log":
            if np.any(np.asarray(args[0]) <= 0):
                raise ExprDomainError("log of non-positive value", node)
            return np.log(args[0])
        if name == "sqrt":
            if np.any(np.asarray(args[0]) < 0):
                raise ExprDomainError("sqrt of negative value", node)
            return np.sqrt(args[0])
        if name == "pow":
            return _check(_power(args[0], args[1], node), node)
        if name == "min":
            return np.minimum(args[0], args[1])
        if name == "max":
            return np.maximum(args[0], args[1])
        fn = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}[name]
        return _check(fn(args[0]), node)
    raise TypeError(f"not an expression node: {node!r}")


def _power(a, b, node):
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    bad_neg = (a_arr < 0) & (b_arr != np.round(b_arr))
    if np.any(bad_neg):
        raise ExprDomainError("non-integer power of negative value", node)
    if np.any((a_arr == 0) & (b_arr < 0)):
        raise ExprDomainError("division by zero", node)
    return np.power(a_arr, b_arr) if (a_arr.ndim or b_arr.ndim) else float(np.power(a_arr, b_arr))


def evaluate(e: Expression, bindings: Mapping[str, object]):
    """Evaluate on floats or numpy arrays (broadcast elementwise).

    Returns a float for scalar bindings. Domain violations raise
    ExprDomainError naming the offending subexpression; NaN is never
    returned silently.
    """
    missing = [v for v in variables(e.root) if v not in bindings]
    if missing:
        raise ExprError(f"unbound variable(s): {', '.join(sorted(missing))}")
    env = {k: (np.asarray(v, dtype=float) if np.ndim(v) else float(v)) for k, v in bindings.items()}
    with np.errstate(all="ignore"):
        out = _eval(e.root, env)
        _check(out, e.root)
    shape = np.broadcast_shapes(*(np.shape(v) for v in env.values())) if env else ()
    if shape:
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()
    return float(out)
