"""Expression language for system definitions.

Grammar (whitespace is insignificant)::

    expr    := signed (('+' | '-') signed)*
    signed  := ('-' | '+') signed | product
    product := factor (('*' | '/') factor)*
    factor  := '-' factor | power
    power   := atom ('^' exponent)?          # right associative
    exponent:= ('-' | '+') exponent | power  # must fold to an integer constant
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

A leading minus applies to the whole product that follows it, so
``-(a*b)*c`` is ``neg(mul(mul(a, b), c))`` and ``-x^2`` is ``-(x^2)``.
Powers take integer exponents only.  Function names are limited to the jet
function set; an unknown function name is a syntax error, while an unknown
variable is only detected when the expression is bound to a coordinate list.

Error offsets are 1-based character positions in the source string.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

from . import jets
from .jets import DomainError, Jet

__all__ = [
    "ExprSyntaxError",
    "UnboundVariableError",
    "Node",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Pow",
    "parse",
    "to_source",
    "to_sexpr",
    "variables",
    "check_bound",
    "eval_over_jets",
    "eval_float",
]


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int, source: str):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset} in {source!r}")


class UnboundVariableError(KeyError):
    def __init__(self, name: str, location: str | None = None):
        self.name = name
        self.location = location
        where = f" in `{location}`" if location else ""
        super().__init__(f"unbound variable {name!r}{where}")

    def __str__(self) -> str:
        return self.args[0]


@dataclass(frozen=True)
class Const:
    value: float
    text: str = field(default="", compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    text: str = field(default="", compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    arg: "Node"
    text: str = field(default="", compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"
    text: str = field(default="", compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"
    text: str = field(default="", compare=False, repr=False)


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int
    text: str = field(default="", compare=False, repr=False)


Node = Union[Const, Var, Neg, BinOp, Call, Pow]

_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()])"
    r")"
)


class _Parser:
    def __init__(self, source: str):
        self.src = source
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(source):
            m = _TOKEN.match(source, pos)
            if m is None or m.end() == pos:
                bad = pos + len(source[pos:]) - len(source[pos:].lstrip())
                if bad >= len(source):
                    break
                raise ExprSyntaxError(f"unexpected character {source[bad]!r}", bad + 1, source)
            kind = m.lastgroup
            if kind is None:  # trailing whitespace
                break
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    # -- token helpers -------------------------------------------------
    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def at_op(self, *ops: str) -> bool:
        t = self.peek()
        return t is not None and t[0] == "op" and t[1] in ops

    def take(self) -> tuple[str, str, int]:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def fail(self, message: str):
        t = self.peek()
        offset = t[2] + 1 if t else len(self.src) + 1
        raise ExprSyntaxError(message, offset, self.src)

    def expect(self, op: str) -> int:
        if not self.at_op(op):
            t = self.peek()
            found = repr(t[1]) if t else "end of input"
            self.fail(f"expected {op!r}, found {found}")
        return self.take()[2]

    def end_of(self) -> int:
        kind, text, start = self.tokens[self.i - 1]
        return start + len(text)

    def text(self, start: int) -> str:
        return self.src[start : self.end_of()]

    # -- grammar -------------------------------------------------------
    def parse(self) -> Node:
        if not self.tokens:
            raise ExprSyntaxError("empty expression", 1, self.src)
        node = self.expr()
        if self.peek() is not None:
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return node

    def start(self) -> int:
        t = self.peek()
        if t is None:
            self.fail("unexpected end of input")
        return t[2]

    def expr(self) -> Node:
        s = self.start()
        node = self.signed()
        while self.at_op("+", "-"):
            op = self.take()[1]
            rhs = self.signed()
            node = BinOp(op, node, rhs, self.text(s))
        return node

    def signed(self) -> Node:
        s = self.start()
        if self.at_op("-"):
            self.take()
            arg = self.signed()
            return Neg(arg, self.text(s))
        if self.at_op("+"):
            self.take()
            return self.signed()
        return self.product()

    def product(self) -> Node:
        s = self.start()
        node = self.factor()
        while self.at_op("*", "/"):
            op = self.take()[1]
            rhs = self.factor()
            node = BinOp(op, node, rhs, self.text(s))
        return node

    def factor(self) -> Node:
        s = self.start()
        if self.at_op("-"):
            self.take()
            return Neg(self.factor(), self.text(s))
        return self.power()

    def power(self) -> Node:
        s = self.start()
        base = self.atom()
        if self.at_op("^"):
            self.take()
            estart = self.start()
            exp_node = self.exponent()
            value = _fold_constant(exp_node)
            if value is None or not float(value).is_integer():
                raise ExprSyntaxError("exponent must be an integer constant", estart + 1, self.src)
            return Pow(base, int(value), self.text(s))
        return base

    def exponent(self) -> Node:
        s = self.start()
        if self.at_op("-"):
            self.take()
            return Neg(self.exponent(), self.text(s))
        if self.at_op("+"):
            self.take()
            return self.exponent()
        return self.power()

    def atom(self) -> Node:
        t = self.peek()
        if t is None:
            self.fail("unexpected end of input")
        kind, text, start = t
        if kind == "num":
            self.take()
            return Const(float(text), text)
        if kind == "name":
            self.take()
            if self.at_op("("):
                if text not in jets.FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", start + 1, self.src)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg, self.text(start))
            return Var(text, text)
        if self.at_op("("):
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        self.fail(f"unexpected token {text!r}")


def _fold_constant(node: Node) -> float | None:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Neg):
        v = _fold_constant(node.arg)
        return None if v is None else -v
    if isinstance(node, Pow):
        v = _fold_constant(node.base)
        return None if v is None else v**node.exponent
    return None


def parse(source: str) -> Node:
    """Parse ``source`` into an immutable expression tree."""
    return _Parser(source).parse()


# -- printing ---------------------------------------------------------------

def to_source(node: Node) -> str:
    """Fully parenthesised source text; re-parses to an equal tree."""
    if isinstance(node, Const):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"-({to_source(node.arg)})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)}) {node.op} ({to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    if isinstance(node, Pow):
        return f"({to_source(node.base)})^({node.exponent})"
    raise TypeError(node)


_OPNAMES = {"+": "add", "-": "sub", "*": "mul", "/": "div"}


def to_sexpr(node: Node) -> str:
    """Compact prefix form, e.g. ``neg(mul(u_x,u_phi))``."""
    if isinstance(node, Const):
        return f"{node.value:g}"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"neg({to_sexpr(node.arg)})"
    if isinstance(node, BinOp):
        return f"{_OPNAMES[node.op]}({to_sexpr(node.left)},{to_sexpr(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_sexpr(node.arg)})"
    if isinstance(node, Pow):
        return f"pow({to_sexpr(node.base)},{node.exponent})"
    raise TypeError(node)


def variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Const):
        return set()
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    if isinstance(node, Pow):
        return variables(node.base)
    return variables(node.left) | variables(node.right)


def check_bound(node: Node, names: Iterable[str]) -> None:
    """Raise :class:`UnboundVariableError` for the first undeclared name."""
    allowed = set(names)
    for name in sorted(variables(node)):
        if name not in allowed:
            raise UnboundVariableError(name, _find_var_text(node, name))


def _find_var_text(node: Node, name: str) -> str | None:
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, Var) and n.name == name:
            return n.text
        if isinstance(n, (Neg, Call)):
            stack.append(n.arg)
        elif isinstance(n, Pow):
            stack.append(n.base)
        elif isinstance(n, BinOp):
            stack.extend([n.right, n.left])
    return None


# -- evaluation -----------------------------------------------------------

def eval_over_jets(node: Node, env: Mapping[str, Union[Jet, float]]) -> Jet:
    """Evaluate the tree with jet arithmetic.

    ``env`` maps names to jets (or plain numbers, which act as constants).
    The result is a jet as long as at least one jet is reachable; a purely
    constant expression returns a float.
    """
    try:
        return _ev(node, env)
    except DomainError as exc:
        if exc.location is None:
            raise DomainError(exc.bare_message, node.text or to_source(node)) from None
        raise


def _ev(node: Node, env):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise UnboundVariableError(node.name, node.text) from None
    try:
        if isinstance(node, Neg):
            return -_ev(node.arg, env)
        if isinstance(node, BinOp):
            a = _ev(node.left, env)
            b = _ev(node.right, env)
            if node.op == "+":
                return a + b
            if node.op == "-":
                return a - b
            if node.op == "*":
                return a * b
            if not isinstance(b, Jet) and b == 0:
                raise DomainError("division by zero")
            return a / b
        if isinstance(node, Call):
            a = _ev(node.arg, env)
            if not isinstance(a, Jet):
                return _FLOAT_FUNCS[node.func](a)
            return jets.FUNCTIONS[node.func](a)
        if isinstance(node, Pow):
            a = _ev(node.base, env)
            if not isinstance(a, Jet):
                if a == 0 and node.exponent < 0:
                    raise DomainError("division by zero")
                return float(a) ** node.exponent
            return jets.pow_int(a, node.exponent)
    except DomainError as exc:
        if exc.location is None:
            raise DomainError(exc.bare_message, node.text or to_source(node)) from None
        raise
    raise TypeError(f"unknown node {node!r}")


def _checked(fn, name, bad):
    def wrapped(x):
        if bad(x):
            raise DomainError(f"{name}: argument outside the domain")
        return fn(x)

    return wrapped


_FLOAT_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": _checked(math.tan, "tan", lambda x: abs(math.cos(x)) <= jets.POLE_TOL),
    "cot": _checked(lambda x: math.cos(x) / math.sin(x), "cot", lambda x: abs(math.sin(x)) <= jets.POLE_TOL),
    "sec": _checked(lambda x: 1.0 / math.cos(x), "sec", lambda x: abs(math.cos(x)) <= jets.POLE_TOL),
    "csc": _checked(lambda x: 1.0 / math.sin(x), "csc", lambda x: abs(math.sin(x)) <= jets.POLE_TOL),
    "sqrt": _checked(math.sqrt, "sqrt", lambda x: x <= 0),
    "exp": math.exp,
    "log": _checked(math.log, "log", lambda x: x <= 0),
    "arctan": math.atan,
}


def eval_float(node: Node, env: Mapping[str, float]) -> float:
    """Plain floating-point evaluation using :mod:`math`; no jets involved."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return float(env[node.name])
        except KeyError:
            raise UnboundVariableError(node.name, node.text) from None
    if isinstance(node, Neg):
        return -eval_float(node.arg, env)
    if isinstance(node, BinOp):
        a = eval_float(node.left, env)
        b = eval_float(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if b == 0:
            raise DomainError("division by zero", node.text)
        return a / b
    if isinstance(node, Call):
        try:
            return _FLOAT_FUNCS[node.func](eval_float(node.arg, env))
        except DomainError as exc:
            raise DomainError(exc.bare_message, node.text) from None
    if isinstance(node, Pow):
        a = eval_float(node.base, env)
        if a == 0 and node.exponent < 0:
            raise DomainError("division by zero", node.text)
        return a**node.exponent
    raise TypeError(f"unknown node {node!r}")
