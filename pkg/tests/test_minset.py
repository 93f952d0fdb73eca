import math
from dataclasses import replace

import numpy as np
import pytest

from pllab import Box, ScalarField, Sublevel, catalogue
from pllab.errors import KernelEmpty, NoMinimizerFound
from pllab.flow import FlowConfig
from pllab.minset import (
    build_model, constant_rank_check, hessian_gap_check, kernel_chart_probe, link_radius,
    locate_minimizers, loglog_slope,
)
from pllab.reporting import jsonable

ANNULUS = Sublevel(0.2, Box([-2, -2], [2, 2]))


@pytest.fixture
def quarter_norm_sq():
    return catalogue("quadratic_psd", Q=0.25 * np.eye(2))


@pytest.fixture
def sphere():
    return catalogue("sq_dist_sphere")


def test_locate_examples(quarter_norm_sq, sine_graph, sphere):
    pts = locate_minimizers(quarter_norm_sq, Box([-1, -1], [1, 1]), n_starts=10)
    assert len(pts) == 1 and np.linalg.norm(pts[0]) < 1e-6
    g = locate_minimizers(sine_graph, Box([-3, -3], [3, 3]), n_starts=50)
    assert len(g) >= 20
    assert np.all(np.abs(g[:, 1] - np.sin(g[:, 0])) < 1e-6)
    s = locate_minimizers(sphere, ANNULUS, n_starts=30)
    assert np.all(np.abs(np.linalg.norm(s, axis=1) - 1) < 1e-6)


def test_locate_dedup_keeps_first(half_norm_sq):
    pts = locate_minimizers(half_norm_sq, Box([-1, -1], [1, 1]), n_starts=8, dedup_radius=1e-5)
    assert len(pts) == 1


def test_no_minimizer_found(half_norm_sq):
    with pytest.raises(NoMinimizerFound):
        locate_minimizers(half_norm_sq, Box([5, 5], [6, 6]), n_starts=4, cfg=FlowConfig(max_time=0.1))


def test_gap_examples(quarter_norm_sq, sine_graph):
    c = hessian_gap_check(quarter_norm_sq, [[0.0, 0.0]], 1.0)
    assert c.passed and c.measured["min_large_eigenvalue"] == pytest.approx(0.5)
    c2 = hessian_gap_check(sine_graph, [[0.0, 0.0]], 4.0)
    assert c2.passed
    w = np.linalg.eigvalsh(sine_graph.hessian([0, 0]))
    assert w == pytest.approx([0.0, 4.0], abs=1e-12)
    lift = catalogue("cylinder_lift", f=catalogue("quadratic_psd", Q=[[0.5]]), k=1)
    c3 = hessian_gap_check(lift, [[0.0, y] for y in (-2.0, 0.0, 3.0)], 2.0)
    assert c3.passed and c3.measured["min_large_eigenvalue"] == pytest.approx(1.0)


def test_gap_violation_witness():
    # 1/2 x^2 with a claimed C=4: eigenvalue 1 sits inside (C/4, C/2)
    c = hessian_gap_check(catalogue("quadratic_psd", Q=[[0.5]]), [[0.0]], 4.0)
    assert not c.passed and c.witness["eigenvalue"] == pytest.approx(1.0)
    c2 = hessian_gap_check(catalogue("quadratic_psd", Q=[[0.6]]), [[0.0]], 4.0)
    assert not c2.passed and c2.witness["eigenvalue"] == pytest.approx(1.2)
    neg = hessian_gap_check(catalogue("quadratic_psd", Q=[[0.5]]), [[0.0]], 4.0, tol_zero=0.5)
    assert neg.witness["eigenvalue"] == pytest.approx(1.0)


def test_rank_examples(sphere, sine_graph, quarter_norm_sq):
    th = np.linspace(0, 2 * np.pi, 30, endpoint=False)
    circle = np.column_stack([np.cos(th), np.sin(th)])
    r = constant_rank_check(sphere, circle, 4.0)
    assert r.passed and r.measured["rank"] == 1 and r.measured["threshold_robust"]
    xs = np.linspace(-3, 3, 20)
    r2 = constant_rank_check(sine_graph, np.column_stack([xs, np.sin(xs)]), 4.0)
    assert r2.passed and r2.measured["rank"] == 1
    r3 = constant_rank_check(quarter_norm_sq, [[0.0, 0.0]], 1.0)
    assert r3.passed and r3.measured["rank"] == 2


def test_rank_not_constant():
    f = catalogue("quadratic_psd", Q=[[1.0]])
    g = ScalarField(dim=1, value_fn=lambda x: 0.0, hess_fn=lambda x: np.array([[4.0 * (x[0] > 0)]]))
    c = constant_rank_check(g, [[-1.0], [1.0]], 4.0)
    assert not c.passed and c.measured["rank"] is None
    assert constant_rank_check(f, [[0.0]], 4.0).passed


def test_chart_examples(sine_graph, sphere, quarter_norm_sq):
    pts = locate_minimizers(sine_graph, Box([-0.5, -0.5], [0.5, 0.5]), n_starts=16)
    c = kernel_chart_probe(sine_graph, [0.0, 0.0], pts, 0.5, 4.0)
    u = np.array(c.measured["kernel_basis"][0])
    assert abs(abs(u @ [1, 1]) / math.sqrt(2) - 1) < 1e-12
    assert c.measured["slopes"][0] == pytest.approx(6.0, abs=0.05)
    assert c.passed and c.measured["injective"]
    s = kernel_chart_probe(sphere, [1.0, 0.0], [[1.0, 0.0]], 0.5, 4.0)
    assert abs(s.measured["kernel_basis"][0][1]) == pytest.approx(1.0)
    assert s.measured["slopes"][0] == pytest.approx(4.0, abs=0.05)
    with pytest.raises(KernelEmpty):
        kernel_chart_probe(quarter_norm_sq, [0.0, 0.0], [[0.0, 0.0]], 0.5, 1.0)


def test_chart_detects_quadratic_growth_along_kernel():
    # x^2 + 0.1 y^2 with C=4: the y eigenvalue 0.2 is below C/4, and f grows like t^2 along it
    f = ScalarField(dim=2, value_fn=lambda x: x[0] ** 2 + 0.1 * x[1] ** 2,
                    hess_fn=lambda x: np.diag([2.0, 0.2]), known_inf=0.0)
    c = kernel_chart_probe(f, [0.0, 0.0], [[0.0, 0.0]], 0.5, 4.0)
    assert c.measured["slopes"][0] == pytest.approx(2.0, abs=1e-6)
    assert not c.passed


def test_chart_shrinks_radius(sphere):
    c = kernel_chart_probe(sphere, [1.0, 0.0], [[1.0, 0.0]], 0.5, 4.0)
    assert c.measured["radius"] < 0.5
    assert c.measured["hessian_variation"] <= 1.0


def test_loglog_slope():
    ts = 1e-2 / 2.0 ** np.arange(8)
    assert loglog_slope(ts**3, ts) == pytest.approx(3.0)
    assert loglog_slope(np.zeros(8), ts) == math.inf


def test_model_examples(quarter_norm_sq, sphere):
    m = build_model(quarter_norm_sq, Box([-1, -1], [1, 1]), 1.0, n_starts=10)
    assert m.singleton and m.manifold_dim == 0 and m.tension is None and m.expected_singleton
    h = catalogue("half_sq_dist_interval", a=0, b=1)
    mh = build_model(h, Box([-1], [2]), 2.0, n_starts=64)
    assert not mh.singleton and len(mh.components) == 1
    assert mh.component_diameters[0] == pytest.approx(1.0, abs=0.01)
    assert mh.tension is None and not mh.expected_singleton
    # explicit linkage radius: the adaptive default fragments a quasi-random curve sample
    ms = build_model(sphere, ANNULUS, 4.0, n_starts=64, r_link=0.5)
    assert not ms.singleton and ms.manifold_dim == 1 and len(ms.components) == 1
    assert ms.component_diameters[0] == pytest.approx(2.0, abs=0.01)


def test_model_invariants(sine_graph):
    m = build_model(sine_graph, Box([-3, -3], [3, 3]), 4.0, n_starts=32)
    n = sine_graph.dim
    assert all(0 <= r <= n for r in m.ranks)
    assert m.constant_rank and m.manifold_dim == n - m.ranks[0] == 1
    assert all(min(w) > -1e-6 * 4.0 for w in m.eigenvalues)
    assert all(sine_graph.eval(p) < 1e-12 for p in m.points)
    # sorted point list
    assert [tuple(p) for p in m.points] == sorted(tuple(p) for p in m.points)
    assert not m.singleton and m.tension is None and not m.expected_singleton
    js = jsonable(m)
    assert js["manifold_dim"] == 1 and len(js["eigenvalues"]) == len(m.points)


def test_theorem_tension_reported(sphere):
    # the sphere field mislabeled as smooth: PL holds on the annulus and the circle is interior,
    # so a non-singleton argmin contradicts the smooth-case verdict
    mislabeled = replace(sphere, smoothness="C_inf")
    m = build_model(mislabeled, ANNULUS, 4.0, n_starts=32)
    assert m.expected_singleton and not m.singleton
    assert m.tension.startswith("theorem tension")
    assert build_model(sphere, ANNULUS, 4.0, n_starts=32).tension is None


def test_cylinder_lift_adds_dimension():
    base = catalogue("quadratic_psd", Q=[[0.25]])
    lift = catalogue("cylinder_lift", f=base, k=1)
    mb = build_model(base, Box([-1], [1]), 1.0, n_starts=8)
    ml = build_model(lift, Box([-1, -1], [1, 1]), 1.0, n_starts=16)
    assert ml.manifold_dim == mb.manifold_dim + 1


def test_positive_definite_quadratics_singleton():
    for Q in ([[1.0, 0.0], [0.0, 3.0]], [[2.0, 0.5], [0.5, 1.0]], [[1.0]]):
        f = catalogue("quadratic_psd", Q=Q)
        n = len(Q)
        m = build_model(f, Box([-1] * n, [1] * n), f.known_pl_constant, n_starts=12)
        assert m.singleton and m.gap_ok and m.constant_rank


def test_link_radius():
    assert link_radius(np.zeros((1, 2))) == 1e-4
    pts = np.array([[0.0], [1.0], [2.0], [10.0]])
    assert link_radius(pts) == pytest.approx(3.0)
