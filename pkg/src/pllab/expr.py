"""A tiny arithmetic-expression language for user-defined scalar fields.

Grammar (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?            # right-associative
    atom   := NUMBER | 'x' INDEX | FUNC '(' expr ')' | '(' expr ')'

``FUNC`` is one of sin, cos, exp, log, sqrt, abs. Variables are 1-based:
``x1 .. xn``. Unary minus binds looser than ``^`` and tighter than ``*``, so
``-x1^2 == -(x1^2)`` and ``-x1*x1 == (-x1)*x1``.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._kernels_py import (
    OP_ABS, OP_ADD, OP_CONST, OP_COS, OP_DIV, OP_EXP, OP_LOG, OP_MUL, OP_NEG,
    OP_POW, OP_SIN, OP_SQRT, OP_SUB, OP_VAR,
)
from .errors import ExprSyntaxError, UnknownIdentifier, VariableOutOfRange
from .fields import ScalarField

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "abs")
UNARY_OPS = ("neg",) + FUNCTIONS
BINARY_OPS = {"+": "add", "-": "sub", "*": "mul", "/": "div", "^": "pow"}
_SYMBOL = {v: k for k, v in BINARY_OPS.items()}
NONSMOOTH_FUNCTIONS = {"abs", "sqrt", "log"}


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 1-based


@dataclass(frozen=True)
class Unary:
    op: str
    child: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            bad = len(src) - len(src[pos:].lstrip())
            raise ExprSyntaxError(bad, f"unexpected character {src[bad]!r}")
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src, dim):
        self.src = src
        self.dim = dim
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, val, pos = self.take()
        if val != text or kind != "op":
            where = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(pos, f"expected {text!r}, found {where}")

    def parse(self):
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ExprSyntaxError(pos, f"unexpected {val!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = BINARY_OPS[self.take()[1]]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = BINARY_OPS[self.take()[1]]
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return Unary("neg", self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return Binary("pow", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "name":
            m = re.fullmatch(r"x(\d+)", val)
            if m:
                idx = int(m.group(1))
                if not 1 <= idx <= self.dim:
                    raise VariableOutOfRange(pos, f"variable {val} outside x1..x{self.dim}")
                return Var(idx)
            if val in FUNCTIONS:
                self.expect("(")
                child = self.expr()
                self.expect(")")
                return Unary(val, child)
            raise UnknownIdentifier(pos, f"unknown identifier {val!r}")
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect(")")
            return node
        where = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(pos, f"unexpected {where}")


def parse(src, dim):
    """Parse ``src`` into an AST over variables ``x1..x{dim}``."""
    if int(dim) < 1:
        raise ValueError("dim must be positive")
    if not src or not src.strip():
        raise ExprSyntaxError(0, "empty expression")
    return _Parser(src, int(dim)).parse()


_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def _prec(node):
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary) and node.op == "neg":
        return 3
    return 5


def to_source(node):
    """Print an AST with the minimal parentheses needed to reparse it identically."""
    if isinstance(node, Const):
        return repr(float(node.value))
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Unary):
        if node.op == "neg":
            inner = to_source(node.child)
            return "-" + (f"({inner})" if _prec(node.child) < 3 else inner)
        return f"{node.op}({to_source(node.child)})"
    p = _PREC[node.op]
    left, right = to_source(node.left), to_source(node.right)
    if node.op == "pow":
        if _prec(node.left) <= p:
            left = f"({left})"
        if _prec(node.right) < 3:
            right = f"({right})"
        return f"{left}^{right}"
    if _prec(node.left) < p:
        left = f"({left})"
    if _prec(node.right) <= p:
        right = f"({right})"
    return f"{left} {_SYMBOL[node.op]} {right}"


def interpret(node, x):
    """Tree-walking evaluation; the reference semantics for compiled programs."""
    from ._kernels_py import _div, _exp, _log, _pow, _sqrt

    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(x[node.index - 1])
    if isinstance(node, Unary):
        a = interpret(node.child, x)
        if node.op in ("sin", "cos") and math.isinf(a):
            return math.nan
        return {
            "neg": lambda v: -v, "sin": math.sin, "cos": math.cos, "exp": _exp,
            "log": _log, "sqrt": _sqrt, "abs": abs,
        }[node.op](a)
    a, b = interpret(node.left, x), interpret(node.right, x)
    return {
        "add": lambda: a + b, "sub": lambda: a - b, "mul": lambda: a * b,
        "div": lambda: _div(a, b), "pow": lambda: _pow(a, b),
    }[node.op]()


_OPCODE = {
    "neg": OP_NEG, "sin": OP_SIN, "cos": OP_COS, "exp": OP_EXP, "log": OP_LOG,
    "sqrt": OP_SQRT, "abs": OP_ABS, "add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL,
    "div": OP_DIV, "pow": OP_POW,
}


@dataclass(frozen=True, eq=False)
class Program:
    """Postfix bytecode for the kernel evaluator."""

    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    depth: int

    def __call__(self, x):
        return kernels.eval_program(self.ops, self.args, self.consts, x, self.depth)


def to_program(node):
    ops, args, consts = [], [], []
    depth = cur = 0

    def emit(op, arg, delta):
        nonlocal depth, cur
        ops.append(op)
        args.append(arg)
        cur += delta
        depth = max(depth, cur)

    def walk(n):
        if isinstance(n, Const):
            consts.append(n.value)
            emit(OP_CONST, len(consts) - 1, 1)
        elif isinstance(n, Var):
            emit(OP_VAR, n.index - 1, 1)
        elif isinstance(n, Unary):
            walk(n.child)
            emit(_OPCODE[n.op], 0, 0)
        else:
            walk(n.left)
            walk(n.right)
            emit(_OPCODE[n.op], 0, -1)

    walk(node)
    return Program(
        np.array(ops, dtype=np.intc),
        np.array(args, dtype=np.intc),
        np.array(consts, dtype=np.float64),
        depth,
    )


def _functions_used(node, acc):
    if isinstance(node, Unary):
        acc.add(node.op)
        _functions_used(node.child, acc)
    elif isinstance(node, Binary):
        _functions_used(node.left, acc)
        _functions_used(node.right, acc)
    return acc


def compile_ast(node, dim):
    """Wrap an AST as a ScalarField with finite-difference derivatives."""
    source = to_source(node)
    nonsmooth = bool(_functions_used(node, set()) & NONSMOOTH_FUNCTIONS)
    return ScalarField(
        dim=int(dim),
        value_fn=to_program(node),
        smoothness="C0" if nonsmooth else "C_inf",
        name="expr",
        meta={"expr": source},
    )


def compile_expr(src, dim):
    return compile_ast(parse(src, dim), dim)
