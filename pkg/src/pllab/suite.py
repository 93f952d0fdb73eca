"""The built-in acceptance experiments, each with fixed seeds and analytic oracles."""

import math
import time

import numpy as np

from . import distance as D
from .certify import quadratic_growth_check
from .fields import Box, ScalarField, Sublevel, catalogue, sample_region
from .flow import EPS_CHECK, FlowConfig, decay_check, integrate_flow, length_bound, length_check, retraction_check
from .minset import (
    build_model, constant_rank_check, hessian_gap_check, kernel_chart_probe, locate_minimizers,
)
from .reporting import Check, dumps

SCHEMA_VERSION = 1


def sine_field():
    """``g(x) = sin x`` with exact derivatives."""
    return ScalarField(
        dim=1,
        value_fn=lambda x: math.sin(x[0]),
        grad_fn=lambda x: np.array([math.cos(x[0])]),
        hess_fn=lambda x: np.array([[-math.sin(x[0])]]),
        name="sin",
        known_argmin=None,
    )


def sine_graph():
    return catalogue("graph_residual", g=sine_field())


def _criterion(cid, title, checks, extra=None):
    passed = all(c.passed for c in checks)
    return {"id": cid, "title": title, "passed": passed, "checks": checks, "details": extra or {}}


def c1_decay(seed, eps):
    cfg = FlowConfig()
    f = catalogue("quadratic_psd", Q=[[0.5]])
    traj = integrate_flow(f, [1.0], cfg, inf_f=0.0)
    tight = decay_check(f, traj, 2.0, 0.0, eps)
    ratios = traj.f_values * np.exp(2 * traj.times) / traj.f_values[0]
    window = Check(
        name="decay_tight_window",
        passed=bool(abs(ratios.max() - 1) <= 1e-6 and abs(ratios.min() - 1) <= 1e-6),
        measured={"max_ratio": float(ratios.max()), "min_ratio": float(ratios.min()), "window": 1e-6},
    )
    g = sine_graph()
    starts = sample_region(Box([-2, -2], [2, 2]), 20, seed)
    runs = [decay_check(g, integrate_flow(g, x0, cfg, inf_f=0.0), 4.0, 0.0, eps) for x0 in starts]
    worst = max(runs, key=lambda c: c.measured["max_ratio"])
    multi = Check(
        name="decay_sine_graph_20_starts",
        passed=all(c.passed for c in runs),
        measured={"max_ratio": worst.measured["max_ratio"], "n_starts": len(runs)},
        witness=next((c.witness for c in runs if not c.passed), None),
    )
    return _criterion(1, "exponential decay", [tight, window, multi])


def c2_length(seed, eps):
    f = catalogue("quadratic_psd", Q=0.5 * np.eye(2))
    traj = integrate_flow(f, [3.0, 4.0], FlowConfig(), inf_f=0.0)
    chk = length_check(traj, 2.0, 0.0, eps=eps)
    L = traj.arclength
    bound = length_bound(2.0, f.eval([3.0, 4.0]), 0.0)
    tight = Check(
        name="length_tight_window",
        passed=abs(L - 5) <= 1e-6 and abs(L - bound) <= 1e-6,
        measured={"arclength": L, "bound": bound, "chord_length": traj.chord_length},
    )
    return _criterion(2, "trajectory length", [chk, tight])


def c3_growth(seed, eps):
    f = catalogue("quadratic_psd", Q=[[0.25]])
    corrected = quadratic_growth_check(f, Box([-2], [2]), 1.0, [[0.0]], n_samples=100, seed=seed)
    literal = quadratic_growth_check(f, Box([-2], [2]), 1.0, [[0.0]], n_samples=0, constant="literal",
                                     extra_points=[[1.0]])
    equality = Check(
        name="growth_corrected_equality",
        passed=corrected.measured["max_abs_deviation"] <= 1e-12,
        measured={"max_abs_deviation": corrected.measured["max_abs_deviation"]},
    )
    negative = Check(
        name="growth_literal_violated_at_1",
        passed=not literal.passed,
        measured={"literal_passed": literal.passed},
        witness=literal.witness,
    )
    return _criterion(3, "quadratic growth, corrected constant", [corrected, equality, negative])


def c4_hessian_gap(seed, eps):
    f = sine_graph()
    pts = locate_minimizers(f, Box([-2, -2], [2, 2]), n_starts=40, seed=seed)[:30]
    eig = np.concatenate([np.linalg.eigvalsh(f.hessian(p)) for p in pts])
    in_set = (np.abs(eig) < 1e-6) | (eig >= 2 - 1e-6)
    spectrum = Check(
        name="spectrum_in_zero_or_half_C",
        passed=bool(len(pts) == 30 and in_set.all()),
        measured={"n_points": int(len(pts)), "max_abs_small": float(np.abs(eig[eig < 1]).max()),
                  "min_large": float(eig[eig >= 1].min())},
    )
    gap = hessian_gap_check(f, pts, 4.0)
    rank = constant_rank_check(f, pts, 4.0)
    rank1 = Check(name="rank_equals_1", passed=rank.measured["rank"] == 1, measured={"rank": rank.measured["rank"]})
    return _criterion(4, "Hessian gap and constant rank", [spectrum, gap, rank, rank1])


def c5_singleton(seed, eps):
    q = catalogue("quadratic_psd", Q=[[1.0, 0.0], [0.0, 3.0]])
    mq = build_model(q, Box([-1, -1], [1, 1]), 4.0, n_starts=20, seed=seed)
    c_q = Check(
        name="quadratic_singleton",
        passed=bool(mq.singleton and len(mq.points) == 1 and np.linalg.norm(mq.points[0]) <= 1e-6),
        measured={"singleton": mq.singleton, "points": mq.points.tolist(), "tension": mq.tension},
    )
    h = catalogue("half_sq_dist_interval", a=0.0, b=1.0)
    mh = build_model(h, Box([-1], [2]), 2.0, n_starts=64, seed=seed)
    diam = mh.component_diameters
    c_h = Check(
        name="interval_not_singleton",
        passed=bool(not mh.singleton and len(diam) == 1 and 0.99 <= diam[0] <= 1.01 and mh.tension is None),
        measured={"singleton": mh.singleton, "component_diameters": diam, "tension": mh.tension,
                  "smoothness": h.smoothness},
    )
    s = catalogue("sq_dist_sphere")
    ms = build_model(s, Sublevel(0.2, Box([-2, -2], [2, 2])), 4.0, n_starts=64, seed=seed)
    c_s = Check(
        name="sphere_not_singleton",
        passed=bool(not ms.singleton and ms.manifold_dim == 1),
        measured={"singleton": ms.singleton, "manifold_dim": ms.manifold_dim, "n_points": len(ms.points)},
    )
    return _criterion(5, "singleton verdict", [c_q, c_h, c_s])


def c6_kernel_chart(seed, eps):
    g = sine_graph()
    pts = locate_minimizers(g, Box([-0.5, -0.5], [0.5, 0.5]), n_starts=32, seed=seed)
    pg = kernel_chart_probe(g, [0.0, 0.0], pts, r=0.5, C=4.0)
    slope_g = Check(
        name="sine_graph_slope",
        passed=bool(min(pg.measured["slopes"]) >= 5.5 and pg.measured["injective"]
                    and pg.measured["radius"] == 0.5),
        measured={k: pg.measured[k] for k in ("slopes", "injective", "radius", "n_pairs")},
    )
    s = catalogue("sq_dist_sphere")
    ps = kernel_chart_probe(s, [1.0, 0.0], [[1.0, 0.0]], r=0.5, C=4.0)
    slope_s = Check(name="sphere_slope", passed=min(ps.measured["slopes"]) >= 3.5,
                    measured={"slopes": ps.measured["slopes"]})
    return _criterion(6, "kernel chart probes", [pg, slope_g, ps, slope_s])


def c7_projection_flow(seed, eps):
    chk = D.flow_formula_check(D.Box([0, 0], [1, 1]), [2.0, 2.0], FlowConfig(), tol=1e-6)
    horizon = Check(name="flow_covers_t10", passed=chk.measured["t_final"] >= 10,
                    measured={"t_final": chk.measured["t_final"]})
    return _criterion(7, "projection flow formula", [chk, horizon])


def convex_fixtures():
    tri = D.Polytope(A=[[-1, 0], [0, -1], [1, 1]], b=[0, 0, 1], feasible_point=[0.2, 0.2])
    return {
        "box": D.Box([0, 0], [1, 1]),
        "affine": D.Affine([0.0, 0.5], [[math.sqrt(0.5), math.sqrt(0.5)]]),
        "polytope": tri,
    }


def c8_convexity(seed, eps):
    pool = sample_region(Box([-2, -2], [2, 2]), 64, seed)
    checks = []
    for name, F in convex_fixtures().items():
        X = [x for x in pool if F.project(x).distance > 1e-6][:20]
        c = D.separation_convexity_test(F, X, y_per_x=10, seed=seed)
        c.name = f"separation_{name}"
        checks.append(c)
        checks.append(Check(name=f"separation_{name}_200_pairs", passed=c.measured["n_pairs"] >= 200,
                            measured={"n_pairs": c.measured["n_pairs"]}))
    sphere = D.Sphere([0.0, 0.0], 1.0)
    xs = np.vstack([[[0.5, 0.0]], sample_region(Box([-2, -2], [2, 2]), 19, seed)])
    sep = D.separation_convexity_test(sphere, xs, y_per_x=8, seed=seed)
    ip = (sep.witness or {}).get("inner_product", -math.inf)
    checks.append(Check(name="separation_sphere_witness", passed=bool(sep.measured["verdict"] == "nonconvex" and ip >= 0.5),
                        measured={"inner_product": ip, "verdict": sep.measured["verdict"]}, witness=sep.witness))
    line = D.Affine([0.0, 0.0], [[1.0, 0.0]])
    ra = D.regularity_probe(line, [[0.3, 0.5], [0.3, -0.5], [-1.0, 0.2], [0.31, 0.52]])
    checks.append(Check(name="regularity_affine_C2", passed=ra.measured["classification"] == "C2_candidate",
                        measured={"classification": ra.measured["classification"]}))
    rb = D.regularity_probe(D.Box([0.0], [1.0]), [[-0.05], [-0.01], [0.01], [0.05]])
    jump = rb.measured["hessian_jump"]
    checks.append(Check(name="regularity_box_C11_jump",
                        passed=bool(rb.measured["classification"] == "C11_candidate" and abs(jump - 1) <= 0.05),
                        measured={"classification": rb.measured["classification"], "hessian_jump": jump}))
    return _criterion(8, "convexity dichotomy evidence", checks)


def c9_retraction(seed, eps):
    f = catalogue("quadratic_psd", Q=0.5 * np.eye(2))
    g = np.linspace(-1, 1, 5)
    grid = [[a, b] for a in g for b in g]
    chk = retraction_check(f, grid, FlowConfig(), 2.0, 0.0, eps)
    rows = chk.measured["points"]
    ratios = [r["ratio"] for r in rows if "ratio" in r]
    origin = next(r for r in rows if r["y"] == [0.0, 0.0])
    tight = Check(
        name="retraction_tight_and_fixed",
        passed=bool(all(abs(r - 1) <= 1e-6 for r in ratios) and origin["displacement"] <= 1e-8),
        measured={"max_abs_ratio_minus_1": max(abs(r - 1) for r in ratios),
                  "origin_displacement": origin["displacement"]},
    )
    return _criterion(9, "retraction bound", [chk, tight])


CRITERIA = [
    ("C1", "exponential decay", c1_decay),
    ("C2", "trajectory length", c2_length),
    ("C3", "quadratic growth, corrected constant", c3_growth),
    ("C4", "Hessian gap and constant rank", c4_hessian_gap),
    ("C5", "singleton verdict", c5_singleton),
    ("C6", "kernel chart probes", c6_kernel_chart),
    ("C7", "projection flow formula", c7_projection_flow),
    ("C8", "convexity dichotomy evidence", c8_convexity),
    ("C9", "retraction bound", c9_retraction),
    ("C10", "determinism and wall time", None),
]


def criterion_ids():
    return [f"{cid} {title}" for cid, title, _ in CRITERIA]


def run_criteria(seed=42, eps=EPS_CHECK, only=None):
    """Run C1-C9 in order; returns a list of criterion dicts and their wall times."""
    results, timings = [], {}
    for cid, _, fn in CRITERIA:
        if fn is None or (only and cid not in only):
            continue
        t = time.perf_counter()
        results.append(fn(seed, eps))
        timings[cid] = time.perf_counter() - t
    return results, timings


def suite_report(results, seed, eps):
    return {
        "schema_version": SCHEMA_VERSION,
        "task": "suite",
        "seed": seed,
        "eps_check": eps,
        "criteria": [
            {"id": f"C{r['id']}", "title": r["title"], "passed": r["passed"],
             "checks": r["checks"], "details": r["details"]}
            for r in results
        ],
    }


def run_suite(seed=42, eps=EPS_CHECK, determinism=True, time_limit=300.0):
    """Full suite. C10 reruns C1-C9 and compares serialized reports byte for byte.

    Returns ``(report, timings, lines)`` where ``lines`` are PASS/FAIL lines.
    """
    t0 = time.perf_counter()
    results, timings = run_criteria(seed, eps)
    report = suite_report(results, seed, eps)
    first = dumps(report)
    lines = [f"{'PASS' if r['passed'] else 'FAIL'} C{r['id']} {r['title']}" for r in results]
    if determinism:
        again, _ = run_criteria(seed, eps)
        identical = dumps(suite_report(again, seed, eps)) == first
        elapsed = time.perf_counter() - t0
        ok = identical and elapsed < time_limit
        report["criteria"].append({
            "id": "C10", "title": "determinism and wall time", "passed": ok,
            "checks": [Check(name="byte_identical_rerun", passed=identical),
                       Check(name="wall_time_under_limit", passed=elapsed < time_limit,
                             measured={"limit_seconds": time_limit})],
            "details": {},
        })
        timings["C10"] = elapsed
        lines.append(f"{'PASS' if ok else 'FAIL'} C10 determinism and wall time")
    return report, timings, lines
