"""Locating the minimizing set and testing its structure.

Minimizers are found as flow limits from quasi-random starts. At each
located point the Hessian spectrum is split at ``C/4``: eigenvalues below
count as kernel, eigenvalues above as rank. For a PL function with constant
``C`` the positive eigenvalues at minimizers are at least ``C/2``, so the
split point sits in the middle of an empty band.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import pdist
from scipy.stats import qmc

from . import kernels
from .certify import check_pl_claim
from .errors import (
    AllPointsSkipped,
    KernelEmpty,
    NoMinimizerFound,
    NonFiniteValue,
    RadiusNotFound,
    StepSizeUnderflow,
)
from .fields import at_least_c2, sample_region
from .flow import FlowConfig, integrate_flow
from .parallel import pmap
from .reporting import Check, sig

EPS_CHECK = 1e-6
DEDUP_RADIUS = 1e-5


def _dedupe(points, radius):
    kept = []
    for p in points:
        if all(np.linalg.norm(p - q) >= radius for q in kept):
            kept.append(p)
    return kept


def _locate(f, region, n_starts, cfg, dedup_radius, inf_f, seed, tol_min):
    cfg = cfg or FlowConfig()
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    starts = sample_region(region, n_starts, seed, f)

    def run(x0):
        try:
            traj = integrate_flow(f, x0, cfg, inf_f)
        except (NonFiniteValue, StepSizeUnderflow):
            return None
        return traj.terminal if traj.converged else None

    terminals = [p for p in pmap(run, starts) if p is not None]
    if not terminals:
        raise NoMinimizerFound("no flow converged; check the region and flow configuration")
    vals = np.array([f.eval(p) for p in terminals])
    inf_used = float(vals.min()) if inf_f is None else float(inf_f)
    tol = 1e-12 * (1.0 + abs(inf_used)) if tol_min is None else tol_min
    good = [p for p, v in zip(terminals, vals) if v - inf_used < tol]
    if not good:
        raise NoMinimizerFound("converged flows did not reach the infimum within tol_min")
    pts = _dedupe(good, dedup_radius)
    return np.array(pts), {"n_starts": int(n_starts), "n_converged": len(terminals),
                           "n_at_inf": len(good), "inf_f_used": inf_used, "tol_min": tol}


def locate_minimizers(f, region, n_starts=32, cfg=None, dedup_radius=DEDUP_RADIUS,
                      inf_f=None, seed=42, tol_min=None):
    """Flow limits from ``n_starts`` quasi-random starts, deduplicated in start order."""
    inf_f = f.known_inf if inf_f is None else inf_f
    pts, _ = _locate(f, region, n_starts, cfg, dedup_radius, inf_f, seed, tol_min)
    return pts


def _spectra(f, K_points):
    return pmap(lambda p: np.linalg.eigvalsh(f.hessian(p)), np.atleast_2d(K_points))


def hessian_gap_check(f, K_points, C, tol_psd=None, tol_zero=None, eps=EPS_CHECK):
    """No eigenvalue at a minimizer lies in ``[tol_zero, C/2 (1 - eps))``; all are PSD."""
    tol_psd = 1e-6 * C if tol_psd is None else tol_psd
    tol_zero = C / 4 if tol_zero is None else tol_zero
    upper = C / 2 * (1 - eps)
    witness = None
    spectra = _spectra(f, K_points)
    for p, w in zip(np.atleast_2d(K_points), spectra):
        for lam in w:
            if lam <= -tol_psd or tol_zero <= lam < upper:
                witness = {"point": p.tolist(), "eigenvalue": float(lam)}
                break
        if witness:
            break
    allw = np.concatenate(spectra)
    small = allw[allw < tol_zero]
    large = allw[allw >= tol_zero]
    return Check(
        name="hessian_gap",
        passed=witness is None,
        measured={
            "C": float(C),
            "gap": [float(tol_zero), float(upper)],
            "n_points": len(spectra),
            "max_abs_small_eigenvalue": float(np.max(np.abs(small))) if small.size else None,
            "min_large_eigenvalue": float(large.min()) if large.size else None,
        },
        witness=witness,
    )


def constant_rank_check(f, K_points, C):
    """Rank (eigenvalues >= C/4) is the same at every point, and unchanged at threshold C/8."""
    spectra = _spectra(f, K_points)
    ranks = [int(np.sum(w >= C / 4)) for w in spectra]
    ranks_half = [int(np.sum(w >= C / 8)) for w in spectra]
    const = len(set(ranks)) == 1
    witness = None
    if not const:
        i = next(i for i, r in enumerate(ranks) if r != ranks[0])
        witness = {"point": np.atleast_2d(K_points)[i].tolist(), "rank": ranks[i], "first_rank": ranks[0]}
    return Check(
        name="constant_rank",
        passed=const,
        measured={
            "rank": ranks[0] if const else None,
            "ranks": sorted(set(ranks)),
            "threshold_robust": ranks == ranks_half,
            "n_points": len(ranks),
        },
        witness=witness,
    )


def _ball_samples(x, r, n, seed):
    d = x.size
    sampler = qmc.Halton(d=d, scramble=True, seed=seed)
    out = []
    while len(out) < n:
        for u in 2 * sampler.random(4 * n) - 1:
            if np.linalg.norm(u) <= 1:
                out.append(x + r * u)
                if len(out) == n:
                    break
    return np.array(out)


def loglog_slope(values, ts):
    """Least-squares slope of ``log(values)`` against ``log(ts)``; inf if values vanish."""
    values = np.asarray(values, dtype=np.float64)
    pos = values > 0
    if pos.sum() < 2:
        return float("inf")
    return float(np.polyfit(np.log(np.asarray(ts)[pos]), np.log(values[pos]), 1)[0])


def kernel_chart_probe(f, x, K_points, r=0.5, C=None, t0=1e-2, n_halvings=7, delta=0.3,
                       dedup_radius=DEDUP_RADIUS, n_hess_samples=64, seed=0, inf_f=None,
                       max_shrinks=30):
    """Local chart of argmin by orthogonal projection onto ker H(x).

    First shrinks ``r`` until ``|H(y) - H(x)|_op <= C/4`` on sampled ``y`` in
    ``B(x, r)``. Then checks (a) injectivity: distinct located minimizers in
    the ball have distinct kernel coordinates; (b) tangency: along each
    kernel direction ``u``, ``f(x + t u)`` decays faster than ``t^2``, measured
    as a log-log slope above ``2 + delta`` for ``t = t0, t0/2, ..., t0/2^n``.
    """
    C = f.known_pl_constant if C is None else C
    x = np.asarray(x, dtype=np.float64)
    inf_f = (f.known_inf if f.known_inf is not None else f.eval(x)) if inf_f is None else inf_f
    Hx = f.hessian(x)
    w, V = np.linalg.eigh(Hx)
    U = V[:, w < C / 4]
    if U.shape[1] == 0:
        raise KernelEmpty("Hessian has full rank at x; the chart is the point itself")

    r_req = float(r)
    for _ in range(max_shrinks):
        Y = _ball_samples(x, r, n_hess_samples, seed)
        var = max(float(np.linalg.norm(f.hessian(y) - Hx, 2)) for y in Y)
        if var <= C / 4:
            break
        r /= 2
    else:
        raise RadiusNotFound("Hessian varies too fast near x")

    K = np.atleast_2d(np.asarray(K_points, dtype=np.float64))
    inside = K[np.linalg.norm(K - x, axis=1) < r]
    coords = (inside - x) @ U
    n_pairs = 0
    collisions = []
    for i in range(len(inside)):
        for j in range(i + 1, len(inside)):
            if np.linalg.norm(inside[i] - inside[j]) <= dedup_radius:
                continue
            n_pairs += 1
            if np.linalg.norm(coords[i] - coords[j]) < dedup_radius:
                collisions.append([inside[i].tolist(), inside[j].tolist()])
    injective = not collisions

    ts = t0 / 2.0 ** np.arange(n_halvings + 1)
    slopes = []
    for k in range(U.shape[1]):
        u = U[:, k]
        vals = [f.eval(x + t * u) - inf_f for t in ts]
        slopes.append(loglog_slope(vals, ts))
    tangent = all(s > 2 + delta for s in slopes)
    return Check(
        name="kernel_chart",
        passed=injective and tangent,
        measured={
            "x": x.tolist(),
            "kernel_dim": int(U.shape[1]),
            "kernel_basis": U.T.tolist(),
            "radius_requested": r_req,
            "radius": r,
            "hessian_variation": var,
            "n_points_in_ball": int(len(inside)),
            "n_pairs": n_pairs,
            "injective": injective,
            "slopes": slopes,
            "slope_threshold": 2 + delta,
            "tangent": tangent,
        },
        witness=None if injective else {"collision": collisions[0]},
    )


@dataclass
class CriticalSetModel:
    points: np.ndarray
    eigenvalues: list
    ranks: list
    components: list  # lists of point indices
    component_diameters: list
    r_link: float
    manifold_dim: Optional[int]
    constant_rank: bool
    singleton: bool
    gap_ok: bool
    expected_singleton: bool
    tension: Optional[str]
    pl_claim_passed: Optional[bool]
    bounded_in_region: bool
    locate_stats: dict = field(default_factory=dict)
    caveats: list = field(default_factory=list)

    def to_json(self):
        return {
            "points": self.points.tolist(),
            "eigenvalues": [[sig(v) for v in w] for w in self.eigenvalues],
            "ranks": self.ranks,
            "components": self.components,
            "component_diameters": self.component_diameters,
            "r_link": self.r_link,
            "manifold_dim": self.manifold_dim,
            "constant_rank": self.constant_rank,
            "singleton": self.singleton,
            "gap_ok": self.gap_ok,
            "expected_singleton": self.expected_singleton,
            "tension": self.tension,
            "pl_claim_passed": self.pl_claim_passed,
            "bounded_in_region": self.bounded_in_region,
            "locate_stats": self.locate_stats,
            "caveats": self.caveats,
        }


def link_radius(points, floor=1e-4):
    """Three times the median nearest-neighbour distance, at least ``floor``."""
    if len(points) < 2:
        return floor
    return max(floor, 3.0 * float(np.median(kernels.nn_distances(points))))


def build_model(f, region, C=None, n_starts=32, cfg=None, r_link=None, dedup_radius=DEDUP_RADIUS,
                seed=42, inf_f=None, n_pl_samples=256):
    """Assemble a :class:`CriticalSetModel` and the singleton verdict."""
    C = f.known_pl_constant if C is None else C
    inf_f = f.known_inf if inf_f is None else inf_f
    pts, stats = _locate(f, region, n_starts, cfg, dedup_radius, inf_f, seed, None)
    pts = pts[np.lexsort(pts.T[::-1])]
    spectra = _spectra(f, pts)
    ranks = [int(np.sum(w >= C / 4)) for w in spectra]
    gap = hessian_gap_check(f, pts, C)
    crank = len(set(ranks)) == 1

    r_link = link_radius(pts) if r_link is None else float(r_link)
    labels = kernels.single_linkage_labels(pts, r_link)
    comps = [np.flatnonzero(labels == k).tolist() for k in range(int(labels.max()) + 1)]
    diams = [float(pdist(pts[c]).max()) if len(c) > 1 else 0.0 for c in comps]
    singleton = len(comps) == 1 and diams[0] < 10 * dedup_radius

    try:
        pl = check_pl_claim(f, region, C, n_pl_samples, stats["inf_f_used"], seed)
        pl_passed = bool(pl.passed)
    except AllPointsSkipped:
        pl_passed = None
    bounded = all(region.boundary_distance(p) > r_link for p in pts)
    expected = at_least_c2(f.smoothness) and bool(pl_passed) and bounded
    tension = None
    if expected and not singleton:
        tension = "theorem tension: check smoothness/region/convergence"
    return CriticalSetModel(
        points=pts,
        eigenvalues=[w.tolist() for w in spectra],
        ranks=ranks,
        components=comps,
        component_diameters=diams,
        r_link=r_link,
        manifold_dim=(f.dim - ranks[0]) if crank else None,
        constant_rank=crank,
        singleton=singleton,
        gap_ok=gap.passed,
        expected_singleton=expected,
        tension=tension,
        pl_claim_passed=pl_passed,
        bounded_in_region=bounded,
        locate_stats=stats,
        caveats=[
            "boundedness of argmin is judged from located points inside the region only",
            "connectivity is single-linkage at r_link; homotopy type is not computed",
        ],
    )
