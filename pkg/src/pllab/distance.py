"""Closed sets with exact metric projection, and the half squared-distance field.

Projections can be multi-valued. They are returned as a list of nearest
points plus a ``unique`` flag, because the checks below need to see where
uniqueness fails.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, InvalidParams, NonUniqueProjection
from .fields import ScalarField, fd_gradient, fd_hessian
from .flow import FlowConfig, integrate_flow
from .parallel import pmap
from .reporting import Check

TIE_RTOL = 1e-10
MERGE_RADIUS = 1e-8


@dataclass
class ProjectionResult:
    nearest: list
    distance: float
    unique: bool

    def to_json(self):
        return {"nearest": [p.tolist() for p in self.nearest], "distance": self.distance, "unique": self.unique}


def _merge(points, radius=MERGE_RADIUS):
    reps = []
    for p in points:
        if all(np.linalg.norm(p - q) > radius for q in reps):
            reps.append(p)
    return reps


def _result(x, candidates):
    reps = _merge(candidates)
    return ProjectionResult(reps, float(np.linalg.norm(x - reps[0])), len(reps) == 1)


class ClosedSet:
    variant = ""
    dim = 0
    convex = False
    affine = False

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.size != self.dim:
            raise DimensionMismatch(f"{self.variant} lives in R^{self.dim}, got a point in R^{x.size}")
        return x

    def project(self, x):
        raise NotImplementedError

    def sample(self, m, rng):
        """``m`` points of the set, concentrated on its boundary where that makes sense."""
        raise NotImplementedError

    def expected_regularity(self):
        """Regularity class of ``1/2 dist^2`` predicted by the convexity/affinity of the set."""
        if self.affine:
            return "C2_candidate"
        if self.convex:
            return "C11_candidate"
        return "nonsmooth"


class PointCloud(ClosedSet):
    variant = "finite_point_cloud"

    def __init__(self, points):
        P = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if P.size == 0:
            raise InvalidParams("point cloud must be nonempty")
        self.points = np.ascontiguousarray(P)
        self.dim = P.shape[1]
        self.convex = self.affine = len(_merge(list(P))) == 1

    def project(self, x):
        x = self._check(x)
        _, idx = kernels.nearest_ties(self.points, x, TIE_RTOL)
        return _result(x, [self.points[i].copy() for i in idx])

    def sample(self, m, rng):
        if m >= len(self.points):
            return self.points.copy()
        return self.points[np.sort(rng.choice(len(self.points), m, replace=False))]

    def to_json(self):
        return {"variant": self.variant, "points": self.points.tolist()}


class Box(ClosedSet):
    variant = "box"

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise InvalidParams("box needs lower <= upper")
        self.dim = self.lower.size
        self.convex = True
        self.affine = bool(np.all(self.lower == self.upper))

    def project(self, x):
        x = self._check(x)
        p = np.clip(x, self.lower, self.upper)
        return ProjectionResult([p], float(np.linalg.norm(x - p)), True)

    def sample(self, m, rng):
        pts = self.lower + rng.random((m, self.dim)) * (self.upper - self.lower)
        faces = rng.integers(0, self.dim, size=m)
        side = rng.random(m) < 0.5
        for k in range(m):
            i = faces[k]
            pts[k, i] = self.upper[i] if side[k] else self.lower[i]
        return pts

    def to_json(self):
        return {"variant": self.variant, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class Sphere(ClosedSet):
    """Euclidean sphere; at the center the projection is the whole sphere.

    That case returns 8 equispaced representatives on the circle in the
    plane of the first two coordinates (2 points in dimension 1).
    """

    variant = "sphere"

    def __init__(self, center, radius):
        self.center = np.atleast_1d(np.asarray(center, dtype=np.float64))
        self.radius = float(radius)
        if not self.radius > 0:
            raise InvalidParams("sphere radius must be positive")
        self.dim = self.center.size

    def _center_representatives(self):
        if self.dim == 1:
            return [self.center - self.radius, self.center + self.radius]
        reps = []
        for k in range(8):
            p = self.center.copy()
            p[0] += self.radius * math.cos(2 * math.pi * k / 8)
            p[1] += self.radius * math.sin(2 * math.pi * k / 8)
            reps.append(p)
        return reps

    def project(self, x):
        x = self._check(x)
        v = x - self.center
        rho = float(np.linalg.norm(v))
        if rho <= 1e-14 * (1.0 + self.radius):
            return ProjectionResult(self._center_representatives(), self.radius - rho, False)
        p = self.center + self.radius * v / rho
        return ProjectionResult([p], abs(rho - self.radius), True)

    def sample(self, m, rng):
        if self.dim == 2:
            ang = 2 * np.pi * np.arange(m) / m
            return self.center + self.radius * np.column_stack([np.cos(ang), np.sin(ang)])
        u = rng.standard_normal((m, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        return self.center + self.radius * u

    def to_json(self):
        return {"variant": self.variant, "center": self.center.tolist(), "radius": self.radius}


class Affine(ClosedSet):
    variant = "affine"

    def __init__(self, basepoint, basis):
        self.basepoint = np.atleast_1d(np.asarray(basepoint, dtype=np.float64))
        self.dim = self.basepoint.size
        B = np.asarray(basis, dtype=np.float64).reshape(-1, self.dim)
        if B.size and not np.allclose(B @ B.T, np.eye(len(B)), rtol=0, atol=1e-12):
            raise InvalidParams("affine basis must be orthonormal (within 1e-12)")
        self.basis = B
        self.convex = self.affine = True

    def project(self, x):
        x = self._check(x)
        v = x - self.basepoint
        p = self.basepoint + self.basis.T @ (self.basis @ v)
        return ProjectionResult([p], float(np.linalg.norm(x - p)), True)

    def sample(self, m, rng):
        coef = 2.0 * rng.standard_normal((m, len(self.basis)))
        return self.basepoint + coef @ self.basis

    def to_json(self):
        return {"variant": self.variant, "basepoint": self.basepoint.tolist(), "basis": self.basis.tolist()}


class Polytope(ClosedSet):
    """``{x : A x <= b}``, nonempty by a feasible point given at construction."""

    variant = "polytope"

    def __init__(self, A, b, feasible_point, max_iter=500):
        self.A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        self.b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        self.feasible_point = np.atleast_1d(np.asarray(feasible_point, dtype=np.float64))
        self.dim = self.A.shape[1]
        if self.b.size != self.A.shape[0] or self.feasible_point.size != self.dim:
            raise InvalidParams("polytope A, b and feasible_point have inconsistent shapes")
        if np.any(self.A @ self.feasible_point > self.b + 1e-9 * (1 + np.abs(self.b))):
            raise InvalidParams("feasible_point violates A x <= b")
        self.convex = True
        self.max_iter = max_iter

    def project(self, x):
        x = self._check(x)
        p = self._active_set(x)
        return ProjectionResult([p], float(np.linalg.norm(x - p)), True)

    def _active_set(self, x):
        """Primal active-set method for ``min |p - x|^2 s.t. A p <= b``.

        Steps along the projection of ``x - p`` onto the null space of the
        working constraints, clamped by a ratio test. At a stationary point
        the least-squares multipliers decide whether to drop a constraint.
        """
        A, b = self.A, self.b
        p = self.feasible_point.copy()
        tol = 1e-12 * (1.0 + np.linalg.norm(x) + np.linalg.norm(p))
        work = []
        for _ in range(self.max_iter):
            r = x - p
            if work:
                AW = A[work]
                lam = np.linalg.lstsq(AW.T, r, rcond=None)[0]
                d = r - AW.T @ lam
            else:
                lam = np.empty(0)
                d = r
            if np.linalg.norm(d) <= tol:
                if not work or lam.min() >= -tol:
                    return p
                work.pop(int(np.argmin(lam)))
                continue
            Ad = A @ d
            slack = b - A @ p
            alpha, block = 1.0, None
            for i in range(len(b)):
                if i not in work and Ad[i] > tol:
                    a = max(slack[i], 0.0) / Ad[i]
                    if a < alpha:
                        alpha, block = a, i
            p = p + alpha * d
            if block is not None:
                work.append(block)
        raise RuntimeError("polytope projection did not terminate")

    def sample(self, m, rng):
        scale = 3.0 * (1.0 + np.max(np.abs(self.feasible_point)))
        raw = self.feasible_point + scale * rng.standard_normal((m, self.dim))
        return np.array([self.project(z).nearest[0] for z in raw])

    def to_json(self):
        return {
            "variant": self.variant,
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "feasible_point": self.feasible_point.tolist(),
        }


class Union(ClosedSet):
    variant = "union"

    def __init__(self, members):
        if not members:
            raise InvalidParams("union needs at least one member")
        self.members = list(members)
        self.dim = self.members[0].dim
        if any(m.dim != self.dim for m in self.members):
            raise InvalidParams("union members must share a dimension")
        self.convex = len(self.members) == 1 and self.members[0].convex
        self.affine = len(self.members) == 1 and self.members[0].affine

    def project(self, x):
        x = self._check(x)
        results = [m.project(x) for m in self.members]
        best = min(r.distance for r in results)
        cut = best + TIE_RTOL * (1.0 + best)
        cands = [p for r in results if r.distance <= cut for p in r.nearest]
        res = _result(x, cands)
        if any(r.distance <= cut and not r.unique for r in results):
            res.unique = False
        return res

    def sample(self, m, rng):
        per = max(1, m // len(self.members))
        return np.vstack([mem.sample(per, rng) for mem in self.members])[:m]

    def to_json(self):
        return {"variant": self.variant, "members": [m.to_json() for m in self.members]}


_VARIANTS = {
    "finite_point_cloud": lambda d: PointCloud(d["points"]),
    "box": lambda d: Box(d["lower"], d["upper"]),
    "sphere": lambda d: Sphere(d["center"], d["radius"]),
    "affine": lambda d: Affine(d["basepoint"], d.get("basis", [])),
    "polytope": lambda d: Polytope(d["A"], d["b"], d["feasible_point"]),
    "union": lambda d: Union([closed_set_from_json(m) for m in d["members"]]),
}


def closed_set_from_json(obj):
    if isinstance(obj, ClosedSet):
        return obj
    try:
        build = _VARIANTS[obj["variant"]]
    except (KeyError, TypeError):
        raise InvalidParams(f"unknown closed-set spec {obj!r}") from None
    try:
        return build(obj)
    except KeyError as exc:
        raise InvalidParams(f"{obj['variant']}: missing field {exc}") from None


def project(F, x):
    return F.project(x)


def dist_sq_field(F):
    """``d_F(x) = 1/2 dist(x, F)^2`` with gradient ``x - proj_F(x)`` where the projection is unique."""

    def value(x):
        d = F.project(x).distance
        return 0.5 * d * d

    def grad(x):
        pr = F.project(x)
        if pr.unique:
            return x - pr.nearest[0]
        return fd_gradient(value, x)

    if F.affine:
        smooth = "C_inf"
    elif F.convex:
        smooth = "C11"
    else:
        smooth = "C0"
    nonsmooth = (F.center,) if isinstance(F, Sphere) else ()
    return ScalarField(
        dim=F.dim,
        value_fn=value,
        grad_fn=grad,
        smoothness=smooth,
        nonsmooth_points=nonsmooth,
        known_inf=0.0,
        # |grad d_F|^2 = dist^2 = 2 d_F where the projection is unique
        known_pl_constant=2.0,
        known_argmin=f"F ({F.variant})",
        name="half_sq_dist_set",
        meta={"set": F.to_json(), "factor": 0.5},
    )


def _unique_projection(F, x):
    pr = F.project(x)
    if not pr.unique:
        raise NonUniqueProjection(f"projection of {np.asarray(x).tolist()} onto {F.variant} is not unique")
    return pr.nearest[0]


def flow_formula_check(F, x, cfg=None, tol=1e-6, n_checkpoints=10, reproj_tol=1e-8):
    """Integrated flow of ``-grad d_F`` against ``x_inf + exp(-t) (x - x_inf)``."""
    cfg = cfg or FlowConfig()
    x = np.asarray(x, dtype=np.float64)
    x_inf = _unique_projection(F, x)
    f = dist_sq_field(F)
    gap0 = f.eval(x)
    # the flow stops once the gap drops below stop_f_gap; keep checkpoints before that
    t_stop = 0.5 * math.log(gap0 / cfg.stop_f_gap) if gap0 > cfg.stop_f_gap else 0.0
    T = min(cfg.max_time, 0.95 * t_stop)
    checkpoints = np.linspace(T / n_checkpoints, T, n_checkpoints) if T > 0 else np.array([])
    traj = integrate_flow(f, x, cfg, inf_f=0.0, t_stops=checkpoints)
    closed = x_inf + np.exp(-traj.times)[:, None] * (x - x_inf)
    dev = np.linalg.norm(traj.states - closed, axis=1)
    reproj = []
    for t in checkpoints:
        i = int(np.argmin(np.abs(traj.times - t)))
        pr = F.project(traj.states[i])
        reproj.append({
            "t": float(traj.times[i]),
            "unique": pr.unique,
            "drift": float(np.linalg.norm(pr.nearest[0] - x_inf)),
        })
    reproj_ok = all(r["unique"] and r["drift"] <= reproj_tol for r in reproj)
    worst = int(np.argmax(dev))
    passed = bool(dev[worst] <= tol and reproj_ok)
    return Check(
        name="projection_flow_formula",
        passed=passed,
        measured={
            "x": x.tolist(),
            "projection": x_inf.tolist(),
            "max_deviation": float(dev[worst]),
            "t_final": float(traj.times[-1]),
            "n_steps": int(len(traj.times) - 1),
            "max_reprojection_drift": max((r["drift"] for r in reproj), default=0.0),
            "checkpoints": reproj,
        },
        witness=None if passed else {"t": float(traj.times[worst]), "deviation": float(dev[worst])},
    )


DEFAULT_S_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0)


def ray_invariance_check(F, x, s_grid=DEFAULT_S_GRID, tol=1e-8):
    """Projection of ``x_inf + s (x - x_inf)`` stays ``x_inf`` for every ``s >= 0``."""
    x = np.asarray(x, dtype=np.float64)
    x_inf = _unique_projection(F, x)
    if np.linalg.norm(x - x_inf) <= 1e-12:
        raise InvalidParams("x lies in F; the ray is degenerate")
    rows = []
    for s in s_grid:
        z = x_inf + float(s) * (x - x_inf)
        pr = F.project(z)
        drift = float(np.linalg.norm(pr.nearest[0] - x_inf)) if pr.unique else None
        rows.append({
            "s": float(s),
            "point": z.tolist(),
            "unique": pr.unique,
            "nearest": [p.tolist() for p in pr.nearest],
            "ok": bool(pr.unique and drift <= tol),
        })
    failures = [r for r in rows if not r["ok"]]
    return Check(
        name="ray_invariance",
        passed=not failures,
        measured={"x": x.tolist(), "projection": x_inf.tolist(), "rows": rows,
                  "failing_s": [r["s"] for r in failures]},
        witness=failures[0] if failures else None,
    )


def separation_convexity_test(F, x_samples, y_per_x=10, y_samples=None, seed=0, tol=1e-8):
    """Obtuse-angle test ``<x - x_inf, y - x_inf> <= 0`` for ``y`` in F.

    Any positive inner product (beyond ``tol`` times the product of the two
    lengths) is a non-convexity witness, as is a non-unique projection.
    """
    rng = np.random.default_rng(seed)
    fixed = None if y_samples is None else np.atleast_2d(np.asarray(y_samples, dtype=np.float64))
    n_pairs = n_skipped = 0
    best = None
    nonunique = []
    for x in np.atleast_2d(np.asarray(x_samples, dtype=np.float64)):
        pr = F.project(x)
        if pr.distance <= 1e-6:
            n_skipped += 1
            continue
        if not pr.unique:
            nonunique.append(x.tolist())
            continue
        x_inf = pr.nearest[0]
        ys = fixed if fixed is not None else F.sample(y_per_x, rng)
        v = x - x_inf
        for y in ys:
            w = y - x_inf
            ip = float(v @ w)
            n_pairs += 1
            scale = max(1.0, float(np.linalg.norm(v) * np.linalg.norm(w)))
            excess = ip - tol * scale
            if best is None or excess > best["excess"]:
                best = {"x": x.tolist(), "y": y.tolist(), "projection": x_inf.tolist(),
                        "inner_product": ip, "excess": excess}
    violated = best is not None and best["excess"] > 0
    verdict = "nonconvex" if (violated or nonunique) else "consistent with convex"
    witness = None
    if violated:
        witness = {k: best[k] for k in ("x", "y", "projection", "inner_product")}
    elif nonunique:
        witness = {"nonunique_projection_at": nonunique[0]}
    return Check(
        name="separation_convexity",
        passed=verdict == "consistent with convex",
        measured={
            "verdict": verdict,
            "n_pairs": n_pairs,
            "n_skipped_inside": n_skipped,
            "n_nonunique": len(nonunique),
            "max_inner_product": None if best is None else best["inner_product"],
        },
        witness=witness,
    )


DEFAULT_H_GRID = (1e-2, 1e-3, 1e-4)


def regularity_probe(F, probe_points, h_grid=DEFAULT_H_GRID, stab_tol=1e-2,
                     lipschitz_bound=10.0, jump_radius=0.1, jump_tol=0.05):
    """Evidence for the smoothness class of ``d_F`` from finite differences.

    Per probe: projection uniqueness, and FD Hessians of the gradient oracle
    at each step in ``h_grid``. A Hessian that agrees across steps (relative
    change below ``stab_tol``) is C2 evidence at that point; a Hessian norm
    above ``lipschitz_bound`` is gradient blow-up. Across probes closer than
    ``jump_radius``, a Hessian change above ``jump_tol`` is a jump (C11 but not
    C2), and a gradient difference quotient above ``lipschitz_bound`` is
    blow-up. For 1/2 dist^2 to a convex set the gradient is 1-Lipschitz.
    """
    f = dist_sq_field(F)
    P = np.atleast_2d(np.asarray(probe_points, dtype=np.float64))
    h_grid = sorted(h_grid, reverse=True)

    def probe(p):
        pr = F.project(p)
        Hs = [fd_hessian(f.grad, p, h) for h in h_grid]
        devs = [float(np.linalg.norm(Hs[i] - Hs[i + 1], 2) / max(1.0, np.linalg.norm(Hs[i + 1], 2)))
                for i in range(len(Hs) - 1)]
        hnorm = max(float(np.linalg.norm(H, 2)) for H in Hs)
        stable = all(d < stab_tol for d in devs)
        if not pr.unique or hnorm > lipschitz_bound:
            label = "nonsmooth"
        elif stable:
            label = "C2"
        else:
            label = "C11"
        return {
            "point": p.tolist(),
            "unique_projection": pr.unique,
            "hessian_deviations": devs,
            "max_hessian_norm": hnorm,
            "evidence": label,
            "_H": Hs[-1],
            "_g": f.grad(p),
        }

    rows = pmap(probe, P)
    max_jump = 0.0
    max_quot = 0.0
    for i in range(len(rows)):
        for j in range(i + 1, len(rows)):
            dist = float(np.linalg.norm(P[i] - P[j]))
            if dist == 0 or dist > jump_radius:
                continue
            max_jump = max(max_jump, float(np.linalg.norm(rows[i]["_H"] - rows[j]["_H"], 2)))
            max_quot = max(max_quot, float(np.linalg.norm(rows[i]["_g"] - rows[j]["_g"])) / dist)
    evidence = [r["evidence"] for r in rows]
    if "nonsmooth" in evidence or max_quot > lipschitz_bound:
        label = "nonsmooth"
    elif "C11" in evidence or max_jump > jump_tol:
        label = "C11_candidate"
    else:
        label = "C2_candidate"
    for r in rows:
        r["hessian"] = r.pop("_H").tolist()
        del r["_g"]
    expected = F.expected_regularity()
    return Check(
        name="regularity_probe",
        passed=label == expected,
        measured={
            "classification": label,
            "expected": expected,
            "hessian_jump": max_jump,
            "max_gradient_quotient": max_quot,
            "probes": rows,
        },
        note="evidence only: finite differences cannot certify a smoothness class",
    )
