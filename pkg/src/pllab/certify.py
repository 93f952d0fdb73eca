"""Sampled PL-constant estimates, claim checks, quadratic growth and normalization."""

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import kernels
from .errors import AllPointsSkipped, EmptyArgminModel, InfBelowSamples, InvalidParams
from .fields import ScalarField, sample_region
from .parallel import pmap
from .reporting import Check

EPS_CHECK = 1e-6
EPS_GROWTH = 1e-3


@dataclass
class PLReport:
    """Empirical PL constant over a region.

    ``c_hat`` is the smallest sampled ratio ``|grad f|^2 / (f - inf_f)``: an
    empirical upper bound on the best constant for the region.
    """

    region: object
    inf_f_used: float
    c_hat: float
    n_samples: int
    n_skipped: int
    sampler_seed: int
    argmin_ratio_point: list
    claimed: Optional[float] = None
    passed: Optional[bool] = None
    violation: Optional[dict] = None
    label: str = "empirical upper bound on the best C"

    def to_json(self):
        return {
            "region": self.region.to_json(),
            "inf_f_used": self.inf_f_used,
            "c_hat": self.c_hat,
            "n_samples": self.n_samples,
            "n_skipped": self.n_skipped,
            "violation": self.violation,
            "sampler_seed": self.sampler_seed,
            "claimed": self.claimed,
            "passed": self.passed,
            "argmin_ratio_point": self.argmin_ratio_point,
            "label": self.label,
        }


def _ratios(f, region, n_samples, inf_f, seed, eps_gap):
    if n_samples < 1:
        raise InvalidParams("n_samples must be >= 1")
    if inf_f is None:
        inf_f = f.known_inf
    if inf_f is None:
        raise InvalidParams(f"{f.name}: no infimum given and none known")
    pts = sample_region(region, n_samples, seed, f)
    vals = np.array(pmap(f.eval, pts))
    tol = 1e-12 * (1.0 + abs(inf_f))
    if np.any(vals < inf_f - tol):
        i = int(np.argmin(vals))
        raise InfBelowSamples(f"f({pts[i].tolist()}) = {vals[i]!r} < inf_f = {inf_f!r}")
    gaps = vals - inf_f
    eps_gap = tol if eps_gap is None else eps_gap
    keep = gaps >= eps_gap
    if not keep.any():
        raise AllPointsSkipped("every sample lies in argmin (within tolerance)")
    kept = pts[keep]
    g2 = np.array(pmap(lambda x: float(np.sum(f.grad(x) ** 2)), kept))
    return kept, g2 / gaps[keep], int((~keep).sum()), float(inf_f)


def estimate_pl_constant(f, region, n_samples=1024, inf_f=None, seed=42, eps_gap=None):
    pts, ratios, skipped, inf_f = _ratios(f, region, n_samples, inf_f, seed, eps_gap)
    i = int(np.argmin(ratios))
    return PLReport(
        region=region,
        inf_f_used=inf_f,
        c_hat=float(ratios[i]),
        n_samples=int(n_samples),
        n_skipped=skipped,
        sampler_seed=int(seed),
        argmin_ratio_point=pts[i].tolist(),
    )


def check_pl_claim(f, region, C_claimed, n_samples=1024, inf_f=None, seed=42, eps=EPS_CHECK, eps_gap=None):
    """Pass iff every sampled ratio is at least ``C_claimed * (1 - eps)``."""
    if not C_claimed > 0:
        raise InvalidParams("claimed constant must be positive")
    rep = estimate_pl_constant(f, region, n_samples, inf_f, seed, eps_gap)
    rep.claimed = float(C_claimed)
    rep.passed = rep.c_hat >= C_claimed * (1 - eps)
    if not rep.passed:
        rep.violation = {"point": rep.argmin_ratio_point, "ratio": rep.c_hat}
    return rep


def quadratic_growth_check(
    f,
    region,
    C,
    argmin_points,
    n_samples=500,
    seed=42,
    inf_f=None,
    constant="corrected",
    extra_points=(),
    eps_growth=EPS_GROWTH,
):
    """Check ``f - inf >= factor * dist(x, argmin)^2`` at sampled points.

    ``constant="corrected"`` uses ``factor = C/4`` (what the length bound
    yields); ``"literal"`` uses ``factor = C``, the normalized statement
    ``f >= dist^2`` rescaled to constant ``C``. Distances are to the finite
    ``argmin_points`` sample, which overestimates the true distance unless the
    sample is dense; the report gives the sample spacing.
    """
    A = np.atleast_2d(np.asarray(argmin_points, dtype=np.float64))
    if A.size == 0:
        raise EmptyArgminModel("no argmin points supplied")
    if inf_f is None:
        inf_f = f.known_inf if f.known_inf is not None else 0.0
    gaps_A = np.array([f.eval(a) - inf_f for a in A])
    if np.any(gaps_A >= 1e-10):
        raise InvalidParams("argmin points must have f-gap below 1e-10")
    if constant not in ("corrected", "literal"):
        raise InvalidParams("constant must be 'corrected' or 'literal'")
    factor = C / 4.0 if constant == "corrected" else float(C)

    X = sample_region(region, n_samples, seed, f) if n_samples else np.empty((0, f.dim))
    extra = np.atleast_2d(np.asarray(extra_points, dtype=np.float64)).reshape(-1, f.dim)
    X = np.vstack([X, extra])
    d = kernels.min_dists(X, A)
    gaps = np.array(pmap(f.eval, X)) - inf_f
    bound = factor * d**2
    ok = gaps >= bound * (1 - eps_growth)
    witness = None
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        witness = {"point": X[i].tolist(), "f_gap": float(gaps[i]), "bound": float(bound[i])}
    if len(A) > 1:
        nn = kernels.nn_distances(A)
        density = {"n_argmin_points": len(A), "median_spacing": float(np.median(nn)), "max_spacing": float(np.max(nn))}
    else:
        density = {"n_argmin_points": 1, "median_spacing": None, "max_spacing": None}
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, gaps / bound, np.inf)
    return Check(
        name=f"quadratic_growth_{constant}",
        passed=bool(ok.all()),
        measured={
            "C": float(C),
            "factor": factor,
            "constant": constant,
            "n_points": int(len(X)),
            "min_ratio": float(np.min(ratio)) if len(X) else None,
            "max_abs_deviation": float(np.max(np.abs(gaps - bound))) if len(X) else None,
            "eps_growth": eps_growth,
            "argmin_sample": density,
        },
        witness=witness,
    )


def normalize(f, C, inf_f=0.0):
    """``g = (f - inf_f) / C``: PL with constant 1 and infimum 0 when f is PL with C."""
    if not C > 0:
        raise InvalidParams("C must be positive")
    C = float(C)
    inf_f = float(inf_f)
    if C == 1.0 and inf_f == 0.0:
        return replace(f, known_pl_constant=1.0, known_inf=0.0)
    grad_fn = (lambda x: np.asarray(f.grad_fn(x)) / C) if f.grad_fn is not None else None
    hess_fn = (lambda x: np.asarray(f.hess_fn(x)) / C) if f.hess_fn is not None else None
    return ScalarField(
        dim=f.dim,
        value_fn=lambda x: (f.value_fn(x) - inf_f) / C,
        grad_fn=grad_fn,
        hess_fn=hess_fn,
        smoothness=f.smoothness,
        nonsmooth_points=f.nonsmooth_points,
        known_inf=0.0,
        known_pl_constant=1.0,
        known_argmin=f.known_argmin,
        name=f"normalized({f.name})",
        meta={**f.meta, "normalized_by": {"C": C, "inf_f": inf_f}},
        grad_step=f.grad_step,
        hess_step=f.hess_step,
    )
