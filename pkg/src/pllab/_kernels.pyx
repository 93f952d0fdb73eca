# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; ``_kernels_py`` holds the reference fallback."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, log, sqrt, fabs, pow, NAN, INFINITY

cnp.import_array()

cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_NEG = 2
    OP_SIN = 3
    OP_COS = 4
    OP_EXP = 5
    OP_LOG = 6
    OP_SQRT = 7
    OP_ABS = 8
    OP_ADD = 9
    OP_SUB = 10
    OP_MUL = 11
    OP_DIV = 12
    OP_POW = 13


cdef inline double _log(double a) nogil:
    if a < 0.0:
        return NAN
    if a == 0.0:
        return -INFINITY
    return log(a)


cdef inline double _sqrt(double a) nogil:
    if a < 0.0:
        return NAN
    return sqrt(a)


def eval_program(const int[::1] ops, const int[::1] args,
                 const double[::1] consts, const double[::1] x, int depth):
    cdef double[64] small
    cdef double[::1] heap
    cdef double* stack = small
    cdef Py_ssize_t i, n = ops.shape[0]
    cdef int sp = 0
    cdef int op
    cdef double a, b
    if depth > 64:
        heap = np.empty(depth, dtype=np.float64)
        stack = &heap[0]
    with nogil:
        for i in range(n):
            op = ops[i]
            if op == OP_CONST:
                stack[sp] = consts[args[i]]
                sp += 1
            elif op == OP_VAR:
                stack[sp] = x[args[i]]
                sp += 1
            elif op <= OP_ABS:
                a = stack[sp - 1]
                if op == OP_NEG:
                    a = -a
                elif op == OP_SIN:
                    a = sin(a)
                elif op == OP_COS:
                    a = cos(a)
                elif op == OP_EXP:
                    a = exp(a)
                elif op == OP_LOG:
                    a = _log(a)
                elif op == OP_SQRT:
                    a = _sqrt(a)
                else:
                    a = fabs(a)
                stack[sp - 1] = a
            else:
                b = stack[sp - 1]
                a = stack[sp - 2]
                sp -= 1
                if op == OP_ADD:
                    a = a + b
                elif op == OP_SUB:
                    a = a - b
                elif op == OP_MUL:
                    a = a * b
                elif op == OP_DIV:
                    if b == 0.0:
                        a = NAN if (a == 0.0 or a != a) else (INFINITY if a > 0 else -INFINITY)
                    else:
                        a = a / b
                else:
                    a = pow(a, b)
                stack[sp - 1] = a
    return stack[0]


def nearest_ties(const double[:, ::1] points, const double[::1] x, double rtol):
    """Distance from ``x`` to the cloud and indices of all points tied for nearest."""
    cdef Py_ssize_t m = points.shape[0], n = points.shape[1], i, j
    cdef double[::1] d2 = np.empty(m, dtype=np.float64)
    cdef double s, t, best = INFINITY, cut
    with nogil:
        for i in range(m):
            s = 0.0
            for j in range(n):
                t = points[i, j] - x[j]
                s += t * t
            d2[i] = s
            if s < best:
                best = s
    best = sqrt(best)
    cut = best + rtol * (1.0 + best)
    idx = [i for i in range(m) if sqrt(d2[i]) <= cut]
    return best, np.asarray(idx, dtype=np.intp)


def min_dists(const double[:, ::1] X, const double[:, ::1] P):
    """Euclidean distance from each row of ``X`` to its nearest row of ``P``."""
    cdef Py_ssize_t k = X.shape[0], m = P.shape[0], n = X.shape[1], a, i, j
    out_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double s, t, best
    with nogil:
        for a in range(k):
            best = INFINITY
            for i in range(m):
                s = 0.0
                for j in range(n):
                    t = P[i, j] - X[a, j]
                    s += t * t
                    if s >= best:
                        break
                if s < best:
                    best = s
            out[a] = sqrt(best)
    return out_arr


cdef Py_ssize_t _find(Py_ssize_t[::1] parent, Py_ssize_t i) nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def single_linkage_labels(const double[:, ::1] points, double radius):
    """Connected components of the graph joining points at distance <= radius.

    Labels are numbered by first appearance in input order.
    """
    cdef Py_ssize_t m = points.shape[0], n = points.shape[1], i, j, k, ri, rj
    parent_arr = np.arange(m, dtype=np.intp)
    cdef Py_ssize_t[::1] parent = parent_arr
    cdef double s, t, r2 = radius * radius
    with nogil:
        for i in range(m):
            for j in range(i + 1, m):
                s = 0.0
                for k in range(n):
                    t = points[i, k] - points[j, k]
                    s += t * t
                if s <= r2:
                    ri = _find(parent, i)
                    rj = _find(parent, j)
                    if ri != rj:
                        if ri < rj:
                            parent[rj] = ri
                        else:
                            parent[ri] = rj
    labels = np.empty(m, dtype=np.intp)
    seen = {}
    for i in range(m):
        root = _find(parent, i)
        labels[i] = seen.setdefault(root, len(seen))
    return labels
