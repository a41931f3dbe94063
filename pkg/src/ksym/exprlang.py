"""Expression language for Hamiltonians, Lagrangians and section components.

Grammar (see ``docs/grammar.ebnf``)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = atom [ "^" unary ] ;
    atom    = number | name | func "(" expr ")" | "(" expr ")" ;

so ``^`` binds tighter than unary minus (``-2^2 == -4``) and is
right-associative (``2^3^2 == 512``).

Variables follow a fixed naming scheme: ``q{i}`` for q^i, ``p{A}_{i}`` for the
momentum p^A_i and ``v{i}_{A}`` for the velocity v^i_A.  Indices are 1-based in
text and resolved to 0-based slots of a :class:`CoordEnv` at parse time.
"""

import re
from dataclasses import dataclass
from functools import cached_property

from . import scalars
from .errors import ParseError

__all__ = [
    "CoordEnv",
    "Ast",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "parse",
    "evaluate",
    "free_vars",
    "to_text",
]

HAMILTONIAN = "hamiltonian"
LAGRANGIAN = "lagrangian"
BASE = "base"


@dataclass(frozen=True)
class CoordEnv:
    """Coordinate names for one chart.

    ``side`` selects the fibre coordinates: ``"hamiltonian"`` gives
    ``q1..qn, p1_1..pk_n`` (momenta A-major), ``"lagrangian"`` gives
    ``q1..qn, v1_1..vn_k`` with the velocities also stored A-major, and
    ``"base"`` only the ``q`` coordinates.
    """

    n: int
    k: int
    side: str = HAMILTONIAN

    def __post_init__(self):
        if not (isinstance(self.n, int) and self.n >= 1 and isinstance(self.k, int) and self.k >= 1):
            raise ValueError(f"dimensions must be positive integers, got n={self.n}, k={self.k}")
        if self.side not in (HAMILTONIAN, LAGRANGIAN, BASE):
            raise ValueError(f"unknown side {self.side!r}")

    @cached_property
    def names(self):
        names = [f"q{i + 1}" for i in range(self.n)]
        for a in range(self.k):
            for i in range(self.n):
                if self.side == HAMILTONIAN:
                    names.append(f"p{a + 1}_{i + 1}")
                elif self.side == LAGRANGIAN:
                    names.append(f"v{i + 1}_{a + 1}")
        return tuple(names)

    @cached_property
    def index(self):
        return {name: j for j, name in enumerate(self.names)}

    @property
    def size(self):
        return len(self.names)

    def p_index(self, a, i):
        """Slot of p^A_i (0-based A, i)."""
        return self.n + a * self.n + i

    def v_index(self, i, a):
        """Slot of v^i_A (0-based i, A)."""
        return self.n + a * self.n + i

    def base(self):
        return CoordEnv(self.n, self.k, BASE)


# ---------------------------------------------------------------------------
# AST


class Ast:
    """Base class of immutable expression nodes."""

    __slots__ = ()

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True)
class Num(Ast):
    value: float


@dataclass(frozen=True)
class Var(Ast):
    name: str
    index: int


@dataclass(frozen=True)
class Neg(Ast):
    operand: Ast


@dataclass(frozen=True)
class BinOp(Ast):
    op: str
    left: Ast
    right: Ast


@dataclass(frozen=True)
class Call(Ast):
    func: str
    arg: Ast


# ---------------------------------------------------------------------------
# lexer

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _byte_offset(src, pos):
    return len(src[:pos].encode("utf-8"))


def _tokenize(src):
    pos = 0
    out = []
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", _byte_offset(src, pos), src)
        if m.lastgroup == "num" and m.end() < len(src) and (src[m.end()].isalpha() or src[m.end()] == "_"):
            raise ParseError("implicit multiplication is not allowed", _byte_offset(src, m.end()), src)
        if m.lastgroup != "ws":
            out.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(_Tok("end", "", len(src)))
    return out


_QVAR = re.compile(r"q(\d+)$")
_PVAR = re.compile(r"p(\d+)_(\d+)$")
_VVAR = re.compile(r"v(\d+)_(\d+)$")


class _Parser:
    def __init__(self, src, env):
        self.src = src
        self.env = env
        self.toks = _tokenize(src)
        self.i = 0

    def error(self, message, tok=None):
        tok = tok or self.peek()
        raise ParseError(message, _byte_offset(self.src, tok.pos), self.src)

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok.kind != "end":
            if tok.text == ")":
                self.error("unbalanced ')'")
            self.error(f"unexpected token {tok.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek().text in ("+", "-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek().text in ("*", "/"):
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek().text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        if self.peek().text == "^":
            self.take()
            node = BinOp("^", node, self.unary())
        return node

    def atom(self):
        tok = self.peek()
        if tok.kind == "num":
            self.take()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.take()
            if tok.text in scalars.FUNCTIONS:
                return self.call(tok)
            if self.peek().text == "(":
                self.error(f"unknown function {tok.text!r}", tok)
            return self.variable(tok)
        if tok.text == "(":
            self.take()
            node = self.expr()
            if self.peek().text != ")":
                self.error("unbalanced '(': expected ')'")
            self.take()
            return node
        if tok.kind == "end":
            self.error("unexpected end of input")
        self.error(f"unexpected token {tok.text!r}")

    def call(self, tok):
        if self.peek().text != "(":
            self.error(f"function {tok.text!r} takes exactly one argument", tok)
        self.take()
        if self.peek().text == ")":
            self.error(f"function {tok.text!r} takes exactly one argument, got 0")
        arg = self.expr()
        if self.peek().text == ",":
            self.error(f"function {tok.text!r} takes exactly one argument")
        if self.peek().text != ")":
            self.error("unbalanced '(': expected ')'")
        self.take()
        return Call(tok.text, arg)

    def variable(self, tok):
        name = tok.text
        env = self.env
        m = _QVAR.match(name)
        if m:
            i = int(m.group(1))
            if not 1 <= i <= env.n:
                self.error(f"index out of range in {name!r} (n={env.n})", tok)
        else:
            m = _PVAR.match(name) if env.side == HAMILTONIAN else _VVAR.match(name) if env.side == LAGRANGIAN else None
            if m is None:
                self.error(f"unknown identifier {name!r}", tok)
            first, second = int(m.group(1)), int(m.group(2))
            a, i = (first, second) if env.side == HAMILTONIAN else (second, first)
            if not (1 <= a <= env.k and 1 <= i <= env.n):
                self.error(f"index out of range in {name!r} (n={env.n}, k={env.k})", tok)
        if name not in env.index:
            self.error(f"unknown identifier {name!r}", tok)
        return Var(name, env.index[name])


def parse(src, env):
    """Parse ``src`` into an :class:`Ast` whose variables index into ``env``."""
    if not src or not src.strip():
        raise ParseError("empty expression", 0, src)
    return _Parser(src, env).parse()


# ---------------------------------------------------------------------------
# evaluation and inspection

_BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": scalars.divide,
    "^": scalars.power,
}


def evaluate(ast, values, env=None):
    """Evaluate ``ast`` with ``values[j]`` bound to environment slot ``j``.

    Generic over the scalar type: floats, numpy arrays, :class:`~ksym.scalars.Dual1`
    or :class:`~ksym.scalars.Dual2` all work.
    """
    if env is not None and len(values) != env.size:
        raise ValueError(f"expected {env.size} values, got {len(values)}")
    return _eval(ast, values)


def _eval(ast, values):
    if isinstance(ast, Num):
        return ast.value
    if isinstance(ast, Var):
        return values[ast.index]
    if isinstance(ast, BinOp):
        return _BINARY[ast.op](_eval(ast.left, values), _eval(ast.right, values))
    if isinstance(ast, Neg):
        return -_eval(ast.operand, values)
    if isinstance(ast, Call):
        return scalars.FUNCTIONS[ast.func](_eval(ast.arg, values))
    raise TypeError(f"not an expression node: {ast!r}")


def free_vars(ast):
    """Names of the coordinates appearing in ``ast``."""
    if isinstance(ast, Var):
        return frozenset({ast.name})
    if isinstance(ast, BinOp):
        return free_vars(ast.left) | free_vars(ast.right)
    if isinstance(ast, Neg):
        return free_vars(ast.operand)
    if isinstance(ast, Call):
        return free_vars(ast.arg)
    return frozenset()


def to_text(ast):
    """Fully parenthesised source text; re-parses to an identical tree."""
    if isinstance(ast, Num):
        return repr(float(ast.value))
    if isinstance(ast, Var):
        return ast.name
    if isinstance(ast, Neg):
        return f"-({to_text(ast.operand)})"
    if isinstance(ast, BinOp):
        left = to_text(ast.left)
        if ast.op == "^" and isinstance(ast.left, Neg):
            left = f"({left})"  # -x^y would parse as -(x^y)
        return f"({left} {ast.op} {to_text(ast.right)})"
    if isinstance(ast, Call):
        return f"{ast.func}({to_text(ast.arg)})"
    raise TypeError(f"not an expression node: {ast!r}")


def as_function(expr, env=None):
    """Turn an :class:`Ast` (or source text, or a callable) into ``f(values)``."""
    if isinstance(expr, str):
        if env is None:
            raise ValueError("an environment is needed to parse expression text")
        expr = parse(expr, env)
    if isinstance(expr, Ast):
        return lambda values, _ast=expr: _eval(_ast, values)
    if callable(expr):
        return expr
    raise TypeError(f"cannot use {expr!r} as a function")
