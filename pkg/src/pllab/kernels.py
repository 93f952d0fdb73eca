"""Backend selection for the hot kernels.

The compiled Cython module is used when it imports; otherwise (or when the
``PLLAB_PURE`` environment variable is set to a non-empty value other than
``0``) the NumPy fallback is used. ``BACKEND`` names the active choice.
"""

import os

import numpy as np

from . import _kernels_py

_force_pure = os.environ.get("PLLAB_PURE", "") not in ("", "0")

try:
    if _force_pure:
        raise ImportError("PLLAB_PURE set")
    from . import _kernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"


def eval_program(ops, args, consts, x, depth):
    return _impl.eval_program(ops, args, consts, np.ascontiguousarray(x, dtype=np.float64), depth)


def nearest_ties(points, x, rtol=1e-10):
    """Return ``(distance, indices)`` of the points of a cloud nearest to ``x``."""
    return _impl.nearest_ties(points, np.ascontiguousarray(x, dtype=np.float64), rtol)


def min_dists(X, P):
    X = np.ascontiguousarray(X, dtype=np.float64)
    P = np.ascontiguousarray(P, dtype=np.float64)
    return _impl.min_dists(X, P)


def single_linkage_labels(points, radius):
    points = np.ascontiguousarray(points, dtype=np.float64)
    return _impl.single_linkage_labels(points, float(radius))


def nn_distances(P):
    """Distance from each point to its nearest other point (inf for a single point)."""
    from scipy.spatial import cKDTree

    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    if len(P) < 2:
        return np.full(len(P), np.inf)
    d, _ = cKDTree(P).query(P, k=2)
    return d[:, 1]
