import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pllab import Box as Region
from pllab import FlowConfig, catalogue, check_pl_claim
from pllab.distance import (
    Affine, Box, PointCloud, Polytope, Sphere, Union, closed_set_from_json, dist_sq_field,
    flow_formula_check, project, ray_invariance_check, regularity_probe, separation_convexity_test,
)
from pllab.errors import DimensionMismatch, InvalidParams, NonUniqueProjection

TRIANGLE = Polytope(A=[[-1, 0], [0, -1], [1, 1]], b=[0, 0, 1], feasible_point=[0.2, 0.2])
FIXTURES = {
    "cloud": PointCloud([[0, 0], [2, 0], [1, 3]]),
    "box": Box([0, 0], [1, 1]),
    "sphere": Sphere([0, 0], 1.0),
    "affine": Affine([0.0, 0.5], [[math.sqrt(0.5), math.sqrt(0.5)]]),
    "polytope": TRIANGLE,
    "union": Union([Box([0, 0], [1, 1]), Sphere([3, 0], 0.5)]),
}
CONVEX = {k: FIXTURES[k] for k in ("box", "affine", "polytope")}
pts2 = st.lists(st.floats(-4, 4, allow_nan=False), min_size=2, max_size=2).map(np.array)


def test_projection_examples():
    s = Sphere([0, 0], 1.0)
    r = s.project([2.0, 0.0])
    assert r.unique and np.allclose(r.nearest[0], [1, 0])
    c = s.project([0.0, 0.0])
    assert not c.unique and c.distance == 1.0 and len(c.nearest) == 8
    b = Box([0.0], [1.0]).project([2.0])
    assert b.unique and b.nearest[0][0] == 1.0 and b.distance == 1.0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        project(Box([0, 0], [1, 1]), [1.0, 2.0, 3.0])


def test_invalid_sets():
    with pytest.raises(InvalidParams):
        PointCloud(np.empty((0, 2)))
    with pytest.raises(InvalidParams):
        Box([1], [0])
    with pytest.raises(InvalidParams):
        Sphere([0, 0], 0.0)
    with pytest.raises(InvalidParams):
        Affine([0, 0], [[1.0, 1.0]])
    with pytest.raises(InvalidParams):
        Polytope(A=[[1, 0]], b=[0], feasible_point=[1, 0])


def test_polytope_projection_brute_force():
    rng = np.random.default_rng(0)
    grid = np.array([[u, v] for u in np.linspace(0, 1, 401) for v in np.linspace(0, 1, 401) if u + v <= 1])
    for x in rng.uniform(-2, 2, (30, 2)):
        p = TRIANGLE.project(x).nearest[0]
        assert np.all(TRIANGLE.A @ p <= TRIANGLE.b + 1e-12)
        brute = np.min(np.linalg.norm(grid - x, axis=1))
        assert np.linalg.norm(x - p) <= brute + 1e-12
        assert np.linalg.norm(x - p) >= brute - 2e-3


def test_union_tie_collection():
    u = Union([PointCloud([[0, 0]]), PointCloud([[2, 0]])])
    r = u.project([1.0, 0.0])
    assert not r.unique and len(r.nearest) == 2


def test_dist_field_examples():
    line = dist_sq_field(Affine([0.0, 0.0], [[1.0, 0.0]]))
    for x in ([0.3, -2.0], [5.0, 1.0]):
        assert line.eval(x) == pytest.approx(0.5 * x[1] ** 2)
        assert np.allclose(line.hessian(x), np.diag([0.0, 1.0]), atol=1e-6)
    box = dist_sq_field(Box([0.0], [1.0]))
    ref = catalogue("half_sq_dist_interval", a=0, b=1)
    for x in np.linspace(-3, 4, 100):
        assert abs(box.eval([x]) - ref.eval([x])) <= 1e-14
    pt = dist_sq_field(PointCloud([[0.0, 0.0]]))
    assert pt.eval([3.0, 4.0]) == pytest.approx(12.5)
    assert dist_sq_field(Sphere([0, 0], 1)).smoothness == "C0"
    assert dist_sq_field(Box([0, 0], [1, 1])).smoothness == "C11"
    assert np.allclose(dist_sq_field(Box([0, 0], [1, 1])).grad([2.0, 3.0]), [1.0, 2.0])


def test_flow_formula_examples():
    c1 = flow_formula_check(PointCloud([[0.0]]), [1.0])
    assert c1.passed and c1.measured["max_deviation"] <= 1e-6
    c2 = flow_formula_check(Box([0, 0], [1, 1]), [2.0, 2.0])
    assert c2.passed and c2.measured["projection"] == [1.0, 1.0]
    assert c2.measured["max_reprojection_drift"] <= 1e-8 and len(c2.measured["checkpoints"]) == 10
    c3 = flow_formula_check(PointCloud([[0, 0], [2, 0]]), [0.5, 1.0])
    assert c3.passed and c3.measured["projection"] == [0.0, 0.0]
    with pytest.raises(NonUniqueProjection):
        flow_formula_check(Sphere([0, 0], 1), [0.0, 0.0])


@pytest.mark.parametrize("name", sorted(CONVEX))
def test_flow_formula_convex_fixtures(name):
    cfg = FlowConfig()
    c = flow_formula_check(CONVEX[name], [2.5, -1.5], cfg)
    assert c.passed
    assert c.measured["max_deviation"] <= 10 * (cfg.rel_tol * math.hypot(2.5, 1.5) + cfg.abs_tol) * 10


def test_ray_examples():
    ok = ray_invariance_check(Box([0.0], [1.0]), [2.0])
    assert ok.passed
    s = ray_invariance_check(Sphere([0, 0], 1), [0.5, 0.0])
    assert not s.passed
    row4 = [r for r in s.measured["rows"] if r["s"] == 4.0][0]
    assert not row4["ok"] and np.allclose(row4["point"], [-1, 0])
    assert np.allclose(row4["nearest"][0], [-1, 0])
    assert 4.0 in s.measured["failing_s"]
    # s=2 is the sphere center, where the projection is not unique
    assert s.measured["failing_s"][0] == 2.0
    assert s.measured["rows"][0]["ok"]


def test_separation_examples():
    X = np.random.default_rng(1).uniform(-2, 3, (40, 2))
    X = [x for x in X if Box([0, 0], [1, 1]).project(x).distance > 1e-6][:20]
    assert separation_convexity_test(Box([0, 0], [1, 1]), X, 10).passed
    sp = separation_convexity_test(Sphere([0, 0], 1), [[0.5, 0.0]], y_samples=[[-1.0, 0.0]])
    assert not sp.passed and sp.witness["inner_product"] == pytest.approx(1.0)
    line = Affine([0.0, 0.0], [[1.0, 0.0]])
    aff = separation_convexity_test(line, [[0.3, 2.0], [-1.0, -1.0]], y_samples=[[5.0, 0.0], [-7.0, 0.0]])
    assert aff.passed and aff.measured["max_inner_product"] == 0.0


@pytest.mark.parametrize("name", sorted(CONVEX))
def test_separation_convex_fixtures(name):
    X = np.random.default_rng(2).uniform(-3, 3, (30, 2))
    assert separation_convexity_test(CONVEX[name], X, 10, seed=4).passed


@pytest.mark.parametrize("F", [Sphere([0, 0], 1), PointCloud([[0, 0], [2, 0]])], ids=["sphere", "two_points"])
def test_separation_nonconvex_fixtures(F):
    X = np.random.default_rng(3).uniform(-2, 3, (30, 2))
    c = separation_convexity_test(F, X, 10, seed=4)
    assert not c.passed and c.witness is not None


def test_regularity_examples():
    a = regularity_probe(Affine([0.0, 0.0], [[1.0, 0.0]]), [[0.3, 0.5], [0.3, -0.5], [-1, 0.2]])
    assert a.measured["classification"] == "C2_candidate"
    b = regularity_probe(Box([0.0], [1.0]), [[-0.05], [-0.01], [0.01], [0.05]])
    assert b.measured["classification"] == "C11_candidate" and b.passed
    assert b.measured["hessian_jump"] == pytest.approx(1.0, abs=0.05)
    s = regularity_probe(Sphere([0, 0], 1), [[1e-3, 0.0], [-1e-3, 0.0]])
    assert s.measured["classification"] == "nonsmooth" and s.passed


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_json_roundtrip(name):
    F = FIXTURES[name]
    G = closed_set_from_json(F.to_json())
    assert G.to_json() == F.to_json()
    for x in ([0.3, 2.2], [-1.0, -1.0]):
        assert np.allclose(F.project(x).nearest[0], G.project(x).nearest[0])


@pytest.mark.parametrize("name", sorted(FIXTURES))
@given(x=pts2)
def test_idempotence(name, x):
    F = FIXTURES[name]
    for p in F.project(x).nearest:
        assert F.project(p).distance < 1e-12


@pytest.mark.parametrize("name", sorted(FIXTURES))
@given(x=pts2)
def test_ties_equidistant(name, x):
    r = FIXTURES[name].project(x)
    for p in r.nearest:
        assert abs(np.linalg.norm(x - p) - r.distance) <= 1e-10 * (1 + r.distance)


@pytest.mark.parametrize("name", sorted(CONVEX))
@given(x=pts2, y=pts2)
def test_nonexpansive(name, x, y):
    F = CONVEX[name]
    px, py = F.project(x).nearest[0], F.project(y).nearest[0]
    assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) * (1 + 1e-10) + 1e-15


@pytest.mark.parametrize("name", sorted(CONVEX))
def test_dist_field_pl_constant_two(name):
    f = dist_sq_field(CONVEX[name])
    assert check_pl_claim(f, Region([-3, -3], [3, 3]), 2.0, 256, inf_f=0.0).passed


@given(x=pts2)
def test_gradient_is_x_minus_projection(x):
    F = FIXTURES["polytope"]
    f = dist_sq_field(F)
    assert np.allclose(f.grad(x), x - F.project(x).nearest[0])
