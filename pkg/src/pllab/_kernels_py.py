"""Pure-Python/NumPy implementations of the hot kernels.

Semantics match ``_kernels.pyx`` exactly; the test suite cross-checks them.
"""

import math

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist

OP_CONST, OP_VAR, OP_NEG, OP_SIN, OP_COS, OP_EXP, OP_LOG, OP_SQRT, OP_ABS = range(9)
OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = range(9, 14)


def _log(a):
    if a < 0.0 or a != a:
        return math.nan
    if a == 0.0:
        return -math.inf
    return math.log(a)


def _sqrt(a):
    if a < 0.0 or a != a:
        return math.nan
    return math.sqrt(a)


def _exp(a):
    try:
        return math.exp(a)
    except OverflowError:
        return math.inf


def _div(a, b):
    if b == 0.0:
        if a == 0.0 or a != a:
            return math.nan
        return math.inf if a > 0 else -math.inf
    return a / b


def _pow(a, b):
    try:
        return math.pow(a, b)
    except ValueError:
        return math.inf if a == 0.0 else math.nan
    except OverflowError:
        return math.inf


_UNARY = {
    OP_NEG: lambda a: -a,
    OP_SIN: math.sin,
    OP_COS: math.cos,
    OP_EXP: _exp,
    OP_LOG: _log,
    OP_SQRT: _sqrt,
    OP_ABS: abs,
}
_BINARY = {
    OP_ADD: lambda a, b: a + b,
    OP_SUB: lambda a, b: a - b,
    OP_MUL: lambda a, b: a * b,
    OP_DIV: _div,
    OP_POW: _pow,
}


def eval_program(ops, args, consts, x, depth):
    stack = []
    push, pop = stack.append, stack.pop
    for op, arg in zip(ops, args):
        if op == OP_CONST:
            push(float(consts[arg]))
        elif op == OP_VAR:
            push(float(x[arg]))
        elif op <= OP_ABS:
            a = pop()
            if math.isinf(a) and op in (OP_SIN, OP_COS):
                push(math.nan)
            else:
                push(_UNARY[op](a))
        else:
            b = pop()
            a = pop()
            push(_BINARY[op](a, b))
    return stack[0]


def nearest_ties(points, x, rtol):
    d = np.sqrt(((points - x) ** 2).sum(axis=1))
    best = float(d.min())
    return best, np.flatnonzero(d <= best + rtol * (1.0 + best)).astype(np.intp)


def min_dists(X, P, chunk=2048):
    out = np.empty(X.shape[0])
    for s in range(0, X.shape[0], chunk):
        block = X[s:s + chunk]
        d2 = ((block[:, None, :] - P[None, :, :]) ** 2).sum(axis=2)
        out[s:s + chunk] = np.sqrt(d2.min(axis=1))
    return out


def single_linkage_labels(points, radius):
    m = points.shape[0]
    if m == 1:
        return np.zeros(1, dtype=np.intp)
    raw = fcluster(linkage(pdist(points), method="single"), t=radius, criterion="distance")
    seen = {}
    return np.array([seen.setdefault(r, len(seen)) for r in raw], dtype=np.intp)
