"""Scalar fields, sampling regions, finite-difference derivatives and the field catalogue."""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.stats import qmc

from .errors import (
    DimensionMismatch,
    InvalidParams,
    NoAnalyticDerivative,
    NonFiniteValue,
    UnknownCatalogueName,
)

SMOOTHNESS_TAGS = ("C_inf", "C2", "C11", "C0")

GRAD_STEP = 1e-6
HESS_STEP = 1e-4


def at_least_c2(tag):
    return tag in ("C_inf", "C2")


def _as_point(x, dim):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != dim:
        raise DimensionMismatch(f"expected a point of dimension {dim}, got {x.shape[0]}")
    return x


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A map R^n -> R with optional analytic first and second derivatives.

    Fields are immutable and their oracles must be pure, so one instance can be
    shared between worker threads. Missing derivatives fall back to central
    differences with per-coordinate steps ``h * max(1, |x_i|)``.

    ``nonsmooth_points`` lists known points where the field is not twice
    differentiable. Each entry may be shorter than ``dim``; only the leading
    coordinates are compared (this is how a cylinder lift keeps its base
    field's kinks).
    """

    dim: int
    value_fn: Callable[[np.ndarray], float]
    grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hess_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    smoothness: str = "C_inf"
    nonsmooth_points: tuple = ()
    known_inf: Optional[float] = None
    known_pl_constant: Optional[float] = None
    known_argmin: Optional[str] = None
    name: str = "custom"
    meta: dict = field(default_factory=dict)
    grad_step: float = GRAD_STEP
    hess_step: float = HESS_STEP

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidParams("dim must be a positive integer")
        if self.smoothness not in SMOOTHNESS_TAGS:
            raise InvalidParams(f"unknown smoothness tag {self.smoothness!r}")

    def eval(self, x):
        x = _as_point(x, self.dim)
        v = float(self.value_fn(x))
        if not np.isfinite(v):
            raise NonFiniteValue(f"{self.name}: non-finite value at {x.tolist()}")
        return v

    __call__ = eval

    def grad(self, x):
        x = _as_point(x, self.dim)
        if self.grad_fn is not None:
            g = np.asarray(self.grad_fn(x), dtype=np.float64).reshape(self.dim)
        else:
            g = fd_gradient(self.value_fn, x, self.grad_step)
        if not np.all(np.isfinite(g)):
            raise NonFiniteValue(f"{self.name}: non-finite gradient at {x.tolist()}")
        return g

    def hessian(self, x):
        x = _as_point(x, self.dim)
        if self.hess_fn is not None:
            H = np.asarray(self.hess_fn(x), dtype=np.float64).reshape(self.dim, self.dim)
        else:
            H = fd_hessian(self.grad, x, self.hess_step)
        if not np.all(np.isfinite(H)):
            raise NonFiniteValue(f"{self.name}: non-finite Hessian at {x.tolist()}")
        return 0.5 * (H + H.T)

    def distance_to_nonsmooth(self, x):
        """Distance from ``x`` to the nearest declared non-smooth point (inf if none)."""
        x = np.asarray(x, dtype=np.float64)
        best = np.inf
        for p in self.nonsmooth_points:
            p = np.atleast_1d(np.asarray(p, dtype=np.float64))
            best = min(best, float(np.linalg.norm(x[: p.size] - p)))
        return best

    def describe(self):
        return {
            "name": self.name,
            "dim": self.dim,
            "smoothness": self.smoothness,
            "nonsmooth_points": [np.atleast_1d(p).tolist() for p in self.nonsmooth_points],
            "known_inf": self.known_inf,
            "known_pl_constant": self.known_pl_constant,
            "known_argmin": self.known_argmin,
            **({"meta": self.meta} if self.meta else {}),
        }


def fd_gradient(value_fn, x, h0=GRAD_STEP):
    """Central-difference gradient with relative per-coordinate steps."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        h = h0 * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (float(value_fn(xp)) - float(value_fn(xm))) / (xp[i] - xm[i])
    return g


def fd_hessian(grad_fn, x, h1=HESS_STEP):
    """Central differences of a gradient oracle, symmetrized."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    H = np.empty((n, n))
    for j in range(n):
        h = h1 * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        H[:, j] = (np.asarray(grad_fn(xp)) - np.asarray(grad_fn(xm))) / (xp[j] - xm[j])
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.upper, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise InvalidParams("box needs lower < upper componentwise")
        object.__setattr__(self, "lower", tuple(lo.tolist()))
        object.__setattr__(self, "upper", tuple(hi.tolist()))

    @property
    def dim(self):
        return len(self.lower)

    def bounds(self):
        return np.array(self.lower), np.array(self.upper)

    def contains(self, x):
        lo, hi = self.bounds()
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def boundary_distance(self, x):
        lo, hi = self.bounds()
        return float(min(np.min(x - lo), np.min(hi - x)))

    def to_json(self):
        return {"box": {"lower": list(self.lower), "upper": list(self.upper)}}


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if not self.radius > 0:
            raise InvalidParams("ball radius must be positive")
        object.__setattr__(self, "center", tuple(c.tolist()))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return len(self.center)

    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    def contains(self, x):
        return bool(np.linalg.norm(x - np.array(self.center)) <= self.radius)

    def boundary_distance(self, x):
        return float(self.radius - np.linalg.norm(x - np.array(self.center)))

    def to_json(self):
        return {"ball": {"center": list(self.center), "radius": self.radius}}


@dataclass(frozen=True)
class Sublevel:
    """``{f <= threshold}`` intersected with a bounding box.

    Membership needs the field, which is passed at sampling time.
    """

    threshold: float
    bounding_box: Box

    @property
    def dim(self):
        return self.bounding_box.dim

    def bounds(self):
        return self.bounding_box.bounds()

    def contains(self, x, f=None):
        if not self.bounding_box.contains(x):
            return False
        return f is None or f.eval(x) <= self.threshold

    def boundary_distance(self, x):
        return self.bounding_box.boundary_distance(x)

    def to_json(self):
        return {"sublevel": {"threshold": self.threshold, **self.bounding_box.to_json()}}


def region_from_json(obj):
    if not isinstance(obj, dict) or len(obj) != 1:
        raise InvalidParams("region must be an object with exactly one of box/ball/sublevel")
    (kind, body), = obj.items()
    if kind == "box":
        return Box(body["lower"], body["upper"])
    if kind == "ball":
        return Ball(body["center"], body["radius"])
    if kind == "sublevel":
        bb = body.get("box") or body.get("bounding_box")
        if bb is None:
            raise InvalidParams("sublevel region needs a bounding box")
        return Sublevel(float(body["threshold"]), Box(bb["lower"], bb["upper"]))
    raise InvalidParams(f"unknown region kind {kind!r}")


def sample_region(region, n, seed, f=None, max_batches=200):
    """Deterministic scrambled-Halton points inside ``region``.

    Balls and sublevel sets are sampled by rejection from their bounding box,
    continuing the same sequence until ``n`` points are accepted.
    """
    lo, hi = region.bounds()
    sampler = qmc.Halton(d=lo.size, scramble=True, seed=seed)
    if isinstance(region, Box):
        return lo + sampler.random(n) * (hi - lo)
    if isinstance(region, Sublevel) and f is None:
        raise InvalidParams("sampling a sublevel region needs the field")
    out = []
    batch = max(64, 2 * n)
    for _ in range(max_batches):
        for x in lo + sampler.random(batch) * (hi - lo):
            ok = region.contains(x, f) if isinstance(region, Sublevel) else region.contains(x)
            if ok:
                out.append(x)
                if len(out) == n:
                    return np.array(out)
    raise InvalidParams("region rejection sampling accepted too few points")


# ---------------------------------------------------------------------------
# derivative validation


@dataclass
class DerivativeReport:
    n_checked: int
    max_grad_deviation: Optional[float]
    max_hess_deviation: Optional[float]
    flagged: list
    excluded: list
    tolerance: float = 1e-4

    @property
    def passed(self):
        return not self.flagged


def validate_derivatives(f, points, tol=1e-4):
    """Compare analytic derivatives of ``f`` with central differences.

    Deviation is ``|analytic - fd| / (1 + |analytic|)``; points within
    ``10 * grad_step`` of a declared non-smooth point are skipped.
    """
    if f.grad_fn is None and f.hess_fn is None:
        raise NoAnalyticDerivative(f"{f.name} has no analytic derivatives to validate")
    gmax = 0.0 if f.grad_fn is not None else None
    hmax = 0.0 if f.hess_fn is not None else None
    flagged, excluded, checked = [], [], 0
    for x in np.atleast_2d(np.asarray(points, dtype=np.float64)):
        if f.distance_to_nonsmooth(x) <= 10 * f.grad_step * max(1.0, float(np.max(np.abs(x)))):
            excluded.append(x)
            continue
        checked += 1
        bad = False
        if gmax is not None:
            ga = f.grad(x)
            gf = fd_gradient(f.value_fn, x, f.grad_step)
            dev = float(np.linalg.norm(ga - gf) / (1.0 + np.linalg.norm(ga)))
            gmax = max(gmax, dev)
            bad |= dev > tol
        if hmax is not None:
            Ha = f.hessian(x)
            grad_src = f.grad if f.grad_fn is not None else (lambda z: fd_gradient(f.value_fn, z, f.grad_step))
            Hf = fd_hessian(grad_src, x, f.hess_step)
            dev = float(np.linalg.norm(Ha - Hf) / (1.0 + np.linalg.norm(Ha)))
            hmax = max(hmax, dev)
            bad |= dev > tol
        if bad:
            flagged.append(x)
    return DerivativeReport(checked, gmax, hmax, flagged, excluded, tol)


# ---------------------------------------------------------------------------
# catalogue


def _quadratic_psd(Q):
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise InvalidParams("Q must be a square matrix")
    Q = 0.5 * (Q + Q.T)
    eig = np.linalg.eigvalsh(Q)
    if eig[0] < -1e-10:
        raise InvalidParams(f"Q is not positive semidefinite (min eigenvalue {eig[0]:.3g})")
    n = Q.shape[0]
    positive = eig[eig > 1e-10 * max(1.0, eig[-1])]
    rank = positive.size
    return ScalarField(
        dim=n,
        value_fn=lambda x: float(x @ Q @ x),
        grad_fn=lambda x: 2.0 * (Q @ x),
        hess_fn=lambda x: 2.0 * Q,
        smoothness="C_inf",
        known_inf=0.0,
        # |2Qx|^2 = 4 x'Q^2 x >= 4 lambda_min+ x'Qx
        known_pl_constant=4.0 * float(positive[0]) if rank else None,
        known_argmin="{0}" if rank == n else f"ker(Q), dimension {n - rank}",
        name="quadratic_psd",
        meta={"Q": Q.tolist(), "factor": 1.0},
    )


def _half_sq_dist_interval(a=0.0, b=1.0):
    a, b = float(a), float(b)
    if not a <= b:
        raise InvalidParams("interval needs a <= b")

    def value(x):
        d = x[0] - min(max(x[0], a), b)
        return 0.5 * d * d

    return ScalarField(
        dim=1,
        value_fn=value,
        grad_fn=lambda x: np.array([x[0] - min(max(x[0], a), b)]),
        hess_fn=lambda x: np.array([[1.0 if (x[0] < a or x[0] > b) else 0.0]]),
        smoothness="C11",
        nonsmooth_points=(np.array([a]), np.array([b])),
        known_inf=0.0,
        known_pl_constant=2.0,
        known_argmin=f"[{a!r}, {b!r}]",
        name="half_sq_dist_interval",
        meta={"a": a, "b": b, "factor": 0.5},
    )


def _half_sq_dist_set(set):
    from .distance import closed_set_from_json, dist_sq_field

    F = closed_set_from_json(set) if isinstance(set, dict) else set
    return dist_sq_field(F)


def _graph_residual(g):
    if isinstance(g, dict):
        g = field_from_json(g)
    if not isinstance(g, ScalarField):
        raise InvalidParams("graph_residual needs g as a ScalarField or field spec")
    m = g.dim

    def value(z):
        r = z[m] - g.value_fn(z[:m])
        return r * r

    def grad(z):
        r = z[m] - g.value_fn(z[:m])
        out = np.empty(m + 1)
        out[:m] = -2.0 * r * g.grad(z[:m])
        out[m] = 2.0 * r
        return out

    def hess(z):
        x = z[:m]
        r = z[m] - g.value_fn(x)
        v = np.append(-g.grad(x), 1.0)
        H = 2.0 * np.outer(v, v)
        H[:m, :m] -= 2.0 * r * g.hessian(x)
        return H

    return ScalarField(
        dim=m + 1,
        value_fn=value,
        grad_fn=grad,
        hess_fn=hess,
        smoothness=g.smoothness,
        known_inf=0.0,
        # |grad f|^2 = 4 r^2 (1 + |grad g|^2) >= 4 f
        known_pl_constant=4.0,
        known_argmin=f"graph of {g.name}",
        name="graph_residual",
        meta={"g": g.name, "factor": 1.0},
    )


def _cylinder_lift(f, k=1):
    if isinstance(f, dict):
        f = field_from_json(f)
    k = int(k)
    if k < 1:
        raise InvalidParams("cylinder_lift needs k >= 1")
    m = f.dim

    def grad(z):
        return np.concatenate([f.grad(z[:m]), np.zeros(k)])

    def hess(z):
        H = np.zeros((m + k, m + k))
        H[:m, :m] = f.hessian(z[:m])
        return H

    return ScalarField(
        dim=m + k,
        value_fn=lambda z: f.value_fn(z[:m]),
        grad_fn=grad,
        hess_fn=hess,
        smoothness=f.smoothness,
        nonsmooth_points=f.nonsmooth_points,
        known_inf=f.known_inf,
        known_pl_constant=f.known_pl_constant,
        known_argmin=f"({f.known_argmin or 'argmin ' + f.name}) x R^{k}",
        name="cylinder_lift",
        meta={"base": f.name, "k": k, **({"factor": f.meta["factor"]} if "factor" in f.meta else {})},
        grad_step=f.grad_step,
        hess_step=f.hess_step,
    )


def _sq_dist_sphere(center=(0.0, 0.0), radius=1.0):
    c = np.atleast_1d(np.asarray(center, dtype=np.float64))
    r = float(radius)
    if not r > 0:
        raise InvalidParams("sphere radius must be positive")
    n = c.size

    def value(x):
        d = np.linalg.norm(x - c) - r
        return d * d

    def grad(x):
        v = x - c
        rho = np.linalg.norm(v)
        if rho == 0.0:
            return np.zeros(n)
        return 2.0 * (rho - r) * v / rho

    def hess(x):
        v = x - c
        rho = np.linalg.norm(v)
        if rho == 0.0:
            return np.full((n, n), np.nan)
        u = v / rho
        P = np.outer(u, u)
        return 2.0 * P + 2.0 * (rho - r) / rho * (np.eye(n) - P)

    return ScalarField(
        dim=n,
        value_fn=value,
        grad_fn=grad,
        hess_fn=hess,
        smoothness="C0",
        nonsmooth_points=(c,),
        known_inf=0.0,
        known_pl_constant=4.0,
        known_argmin=f"sphere(center={c.tolist()}, radius={r!r})",
        name="sq_dist_sphere",
        meta={"center": c.tolist(), "radius": r, "factor": 1.0},
    )


CATALOGUE = {
    "quadratic_psd": (_quadratic_psd, "Q: n x n PSD matrix; f(x) = x'Qx"),
    "half_sq_dist_interval": (_half_sq_dist_interval, "a, b: reals a <= b; f(x) = 1/2 dist(x,[a,b])^2"),
    "half_sq_dist_set": (_half_sq_dist_set, "set: ClosedSetRep JSON; f(x) = 1/2 dist(x,F)^2"),
    "graph_residual": (_graph_residual, "g: field spec of dim n-1; f(x,y) = (y - g(x))^2"),
    "cylinder_lift": (_cylinder_lift, "f: field spec, k >= 1; f~(x,x') = f(x)"),
    "sq_dist_sphere": (_sq_dist_sphere, "center: point, radius > 0; f(x) = dist(x, sphere)^2"),
}


def catalogue(name, params=None, **kwargs):
    """Build a catalogue field by name; parameters as a dict or keywords."""
    try:
        builder = CATALOGUE[name][0]
    except KeyError:
        raise UnknownCatalogueName(f"unknown catalogue field {name!r}") from None
    params = {**(params or {}), **kwargs}
    try:
        f = builder(**params)
    except TypeError as exc:
        raise InvalidParams(f"{name}: {exc}") from None
    return replace(f, meta={**f.meta, "params": _jsonable(params)})


def _jsonable(obj):
    if isinstance(obj, ScalarField):
        return obj.name
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "to_json"):
        return obj.to_json()
    return obj


def field_from_json(spec):
    """Field spec is ``{"name": ..., "params": {...}}`` or ``{"expr": ..., "dim": n}``."""
    if not isinstance(spec, dict):
        raise InvalidParams("field spec must be an object")
    has_expr = "expr" in spec
    has_name = "name" in spec
    if has_expr == has_name:
        raise InvalidParams("field spec needs exactly one of 'name' or 'expr'")
    if has_expr:
        from .expr import compile_expr

        if "dim" not in spec:
            raise InvalidParams("expr field spec needs 'dim'")
        return compile_expr(spec["expr"], int(spec["dim"]))
    return catalogue(spec["name"], spec.get("params") or {})


def list_catalogue():
    """Text listing of catalogue names, parameter schemas and metadata of default instances."""
    from .distance import PointCloud
    from .expr import compile_expr

    defaults = {
        "quadratic_psd": {"Q": [[1.0, 0.0], [0.0, 1.0]]},
        "half_sq_dist_interval": {"a": 0.0, "b": 1.0},
        "half_sq_dist_set": {"set": PointCloud([[0.0, 0.0]])},
        "graph_residual": {"g": compile_expr("sin(x1)", 1)},
        "cylinder_lift": {"f": _half_sq_dist_interval(0.0, 1.0), "k": 1},
        "sq_dist_sphere": {"center": [0.0, 0.0], "radius": 1.0},
    }
    lines = []
    for name in sorted(CATALOGUE):
        f = CATALOGUE[name][0](**defaults[name])
        lines.append(
            f"{name}\n  params: {CATALOGUE[name][1]}\n"
            f"  example: {_jsonable(defaults[name])}\n"
            f"  smoothness={f.smoothness} known_inf={f.known_inf} "
            f"known_pl_constant={f.known_pl_constant:g} argmin={f.known_argmin}"
        )
    return "\n".join(lines) + "\n"
