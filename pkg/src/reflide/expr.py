"""Arithmetic expression language for problem definitions.

Grammar (``^`` is right-associative and binds tighter than unary minus)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | power
    power  := atom ('^' factor)?
    atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'

so ``-t^2`` is ``-(t^2)`` and ``2^-1`` is ``2^(-1)``.  ``pi`` and ``e`` are
predefined constants.  Evaluation works on Python floats and on numpy arrays
alike, which is what the solver relies on for speed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

CONSTANTS = {"pi": math.pi, "e": math.e}

# name -> (arity, implementation)
FUNCTIONS: dict[str, tuple[int, Callable]] = {
    "sin": (1, np.sin),
    "cos": (1, np.cos),
    "tan": (1, np.tan),
    "tanh": (1, np.tanh),
    "exp": (1, np.exp),
    "ln": (1, np.log),
    "sqrt": (1, np.sqrt),
    "abs": (1, np.abs),
    "sign": (1, np.sign),
    "min": (2, np.minimum),
    "max": (2, np.maximum),
}


class ExpressionError(ValueError):
    """Base class for parse and evaluation failures."""


class ExpressionSyntaxError(ExpressionError):
    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        self.offset = offset
        self.expected = expected
        detail = f"{message} at byte {offset}"
        if expected:
            detail += f" (expected one of: {', '.join(expected)})"
        super().__init__(detail)


class UnboundVariableError(ExpressionError):
    pass


class DomainError(ExpressionError):
    def __init__(self, message: str, node: "Node"):
        self.node = node
        super().__init__(f"{message} in '{to_source(node)}'")


# --- AST -------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
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
class Call:
    name: str
    args: tuple["Node", ...]


Node = Union[Num, Var, Neg, BinOp, Call]


# --- tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | op | end
    text: str
    offset: int  # byte offset into the UTF-8 source


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    byte_pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {source[pos]!r}", byte_pos)
        text = m.group(0)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, text, byte_pos))
        pos = m.end()
        byte_pos += len(text.encode("utf-8"))
    tokens.append(_Token("end", "", byte_pos))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _advance(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def _expect(self, text: str) -> None:
        if self.tok.text != text or self.tok.kind != "op":
            raise ExpressionSyntaxError(
                f"unexpected {self._describe(self.tok)}", self.tok.offset, (repr(text),)
            )
        self._advance()

    @staticmethod
    def _describe(tok: _Token) -> str:
        return "end of input" if tok.kind == "end" else repr(tok.text)

    def parse(self) -> Node:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(
                f"unexpected {self._describe(self.tok)}",
                self.tok.offset,
                ("'+'", "'-'", "'*'", "'/'", "'^'", "end of input"),
            )
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self._advance().text
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.tok.kind == "op" and self.tok.text == "-":
            self._advance()
            return Neg(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.tok.kind == "op" and self.tok.text == "^":
            self._advance()
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Node:
        tok = self.tok
        if tok.kind == "number":
            self._advance()
            return Num(float(tok.text))
        if tok.kind == "ident":
            self._advance()
            if self.tok.kind == "op" and self.tok.text == "(":
                return self._call(tok)
            return Var(tok.text)
        if tok.kind == "op" and tok.text == "(":
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        raise ExpressionSyntaxError(
            f"unexpected {self._describe(tok)}",
            tok.offset,
            ("number", "identifier", "'('", "'-'"),
        )

    def _call(self, name_tok: _Token) -> Node:
        name = name_tok.text
        if name not in FUNCTIONS:
            raise ExpressionSyntaxError(f"unknown function '{name}'", name_tok.offset)
        self._expect("(")
        args = [self.expr()]
        while self.tok.kind == "op" and self.tok.text == ",":
            self._advance()
            args.append(self.expr())
        self._expect(")")
        arity = FUNCTIONS[name][0]
        if len(args) != arity:
            raise ExpressionSyntaxError(
                f"function '{name}' takes {arity} argument(s), got {len(args)}",
                name_tok.offset,
            )
        return Call(name, tuple(args))


# --- printing --------------------------------------------------------------


def _format_number(value: float) -> str:
    text = repr(float(value))
    return text


def to_source(node: Node) -> str:
    """Render an AST back to source text that re-parses to the same tree."""
    if isinstance(node, Num):
        return _format_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = to_source(node.operand)
        if isinstance(node.operand, (BinOp, Neg)):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, BinOp):
        left, right = to_source(node.left), to_source(node.right)
        if isinstance(node.left, (BinOp, Neg)):
            left = f"({left})"
        if isinstance(node.right, (BinOp, Neg)):
            right = f"({right})"
        return f"{left} {node.op} {right}"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def _collect_vars(node: Node, out: dict[str, None]) -> None:
    if isinstance(node, Var):
        if node.name not in CONSTANTS:
            out.setdefault(node.name)
    elif isinstance(node, Neg):
        _collect_vars(node.operand, out)
    elif isinstance(node, BinOp):
        _collect_vars(node.left, out)
        _collect_vars(node.right, out)
    elif isinstance(node, Call):
        for arg in node.args:
            _collect_vars(arg, out)


# --- evaluation ------------------------------------------------------------


def _checked_div(node: Node, x, y):
    if np.any(np.asarray(y) == 0):
        raise DomainError("division by zero", node)
    return x / y


def _checked_pow(node: Node, x, y):
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        out = np.power(np.asarray(x, dtype=float), y)
    if np.any(np.isnan(out) & ~np.isnan(np.asarray(x, dtype=float) + y)):
        raise DomainError("non-real power", node)
    if np.any((np.asarray(x) == 0) & (np.asarray(y) < 0)):
        raise DomainError("division by zero", node)
    return out


def _compile(node: Node) -> Callable[[Mapping[str, object]], object]:
    if isinstance(node, Num):
        value = node.value
        return lambda env: value
    if isinstance(node, Var):
        name = node.name
        if name in CONSTANTS:
            const = CONSTANTS[name]
            return lambda env: const

        def lookup(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariableError(f"unbound variable '{name}'") from None

        return lookup
    if isinstance(node, Neg):
        inner = _compile(node.operand)
        return lambda env: -inner(env)
    if isinstance(node, BinOp):
        left, right = _compile(node.left), _compile(node.right)
        op = node.op
        if op == "+":
            return lambda env: left(env) + right(env)
        if op == "-":
            return lambda env: left(env) - right(env)
        if op == "*":
            return lambda env: left(env) * right(env)
        if op == "/":
            return lambda env: _checked_div(node, left(env), right(env))
        return lambda env: _checked_pow(node, left(env), right(env))
    if isinstance(node, Call):
        fn = FUNCTIONS[node.name][1]
        args = [_compile(a) for a in node.args]
        if node.name == "ln":

            def ln(env):
                x = args[0](env)
                if np.any(np.asarray(x) <= 0):
                    raise DomainError("ln of non-positive value", node)
                return np.log(x)

            return ln
        if node.name == "sqrt":

            def sqrt(env):
                x = args[0](env)
                if np.any(np.asarray(x) < 0):
                    raise DomainError("sqrt of negative value", node)
                return np.sqrt(x)

            return sqrt
        if len(args) == 1:
            a0 = args[0]
            return lambda env: fn(a0(env))
        a0, a1 = args
        return lambda env: fn(a0(env), a1(env))
    raise TypeError(f"not an expression node: {node!r}")


class Expression:
    """A parsed, immutable expression.

    ``free_vars`` lists the variables in order of first appearance; ``pi``
    and ``e`` are constants and never appear there.
    """

    __slots__ = ("ast", "free_vars", "_fn")

    def __init__(self, ast: Node):
        object.__setattr__(self, "ast", ast)
        found: dict[str, None] = {}
        _collect_vars(ast, found)
        object.__setattr__(self, "free_vars", tuple(found))
        object.__setattr__(self, "_fn", _compile(ast))

    def __setattr__(self, name, value):
        raise AttributeError("Expression is immutable")

    def __eq__(self, other):
        return isinstance(other, Expression) and self.ast == other.ast

    def __hash__(self):
        return hash(self.ast)

    def __repr__(self):
        return f"Expression({to_source(self.ast)!r})"

    def __str__(self):
        return to_source(self.ast)

    @property
    def is_zero(self) -> bool:
        """True only for the literal ``0`` (structural, not semantic)."""
        return isinstance(self.ast, Num) and self.ast.value == 0.0

    def evaluate(self, bindings: Mapping[str, object]):
        with np.errstate(over="ignore"):
            out = self._fn(bindings)
        if isinstance(out, np.ndarray) or any(
            isinstance(v, np.ndarray) for v in bindings.values()
        ):
            return np.asarray(out, dtype=float)
        return float(out)

    def bind(self, *arg_names: str, constants: Mapping[str, float] | None = None):
        """Return ``fn(*args)`` evaluating this expression with positional args.

        Raises if the expression uses a variable that is neither an argument
        nor one of ``constants``.
        """
        consts = dict(constants or {})
        allowed = set(arg_names) | set(consts)
        extra = [v for v in self.free_vars if v not in allowed]
        if extra:
            raise UnboundVariableError(
                f"variable(s) {', '.join(extra)} not allowed here "
                f"(allowed: {', '.join(sorted(allowed | set(CONSTANTS)))})"
            )
        fn = self._fn
        names = arg_names

        def bound(*args):
            env = dict(consts)
            env.update(zip(names, args))
            with np.errstate(over="ignore"):
                out = fn(env)
            return out + np.zeros(np.broadcast(*args).shape) if args else out

        bound.expression = self
        return bound


def parse(source: str) -> Expression:
    return Expression(_Parser(source).parse())


def evaluate(e: Expression, bindings: Mapping[str, object]):
    return e.evaluate(bindings)
