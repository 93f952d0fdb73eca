import math

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from pllab import Box, FlowConfig, catalogue, sample_region
from pllab.distance import PointCloud, dist_sq_field
from pllab.errors import NotConverged, NoWitnessFound
from pllab.flow import (
    basin_witness, decay_check, flow_limit, integrate_flow, length_bound, length_check,
    read_trajectory_csv, retraction_check, state_at,
)


def test_linear_flow_closed_form(half_x_sq):
    traj = integrate_flow(half_x_sq, [1.0], t_stops=[1.0])
    assert state_at(traj, 1.0)[0] == pytest.approx(math.exp(-1), abs=1e-6)
    # every accepted state matches exp(-t)
    assert np.max(np.abs(traj.states[:, 0] - np.exp(-traj.times))) < 1e-6


def test_axis_symmetry(half_norm_sq):
    traj = integrate_flow(half_norm_sq, [1.0, 0.0])
    assert np.all(traj.states[:, 1] == 0)
    norms = np.linalg.norm(traj.states, axis=1)
    assert np.all(np.diff(norms) < 0)


def test_constant_field(zero_field):
    traj = integrate_flow(zero_field, [0.3, -2.0])
    assert np.array_equal(traj.terminal, [0.3, -2.0])
    assert traj.arclength == 0
    assert traj.stop_reason == "grad_small"


def test_flow_limit_examples(half_norm_sq, sine_graph):
    # the default f-gap stop allows |p| up to sqrt(2e-16); see the stop-rule test below
    assert np.linalg.norm(flow_limit(half_norm_sq, [2.0, 3.0])) < 1.5e-8
    tight = FlowConfig(stop_f_gap=1e-20)
    assert np.linalg.norm(flow_limit(half_norm_sq, [2.0, 3.0], tight)) < 1e-8
    p = flow_limit(sine_graph, [0.0, 0.5], inf_f=0.0)
    assert sine_graph.eval(p) < 1e-15
    assert abs(p[1] - math.sin(p[0])) < 1e-7
    cloud = dist_sq_field(PointCloud([[0, 0], [2, 0]]))
    assert np.linalg.norm(flow_limit(cloud, [0.5, 1.0], inf_f=0.0)) < 1e-6


def test_flow_limit_stop_rule_bound(half_norm_sq):
    # with the f-gap stop at 1e-16 the terminal norm of 1/2|x|^2 is at most sqrt(2e-16)
    p = flow_limit(half_norm_sq, [2.0, 3.0], inf_f=0.0)
    assert np.linalg.norm(p) <= math.sqrt(2 * FlowConfig().stop_f_gap) * (1 + 1e-6)


def test_not_converged():
    f = catalogue("quadratic_psd", Q=[[1e-3]])
    with pytest.raises(NotConverged):
        flow_limit(f, [1.0], FlowConfig(max_time=1.0))


def test_stop_reasons(half_x_sq):
    assert integrate_flow(half_x_sq, [1.0], FlowConfig(max_time=0.5)).stop_reason == "max_time"
    assert integrate_flow(half_x_sq, [1.0], FlowConfig(max_steps=3)).stop_reason == "max_steps"
    assert integrate_flow(half_x_sq, [1.0], inf_f=0.0).stop_reason == "f_gap_small"


def test_decay_examples(half_x_sq, zero_field):
    traj = integrate_flow(half_x_sq, [1.0], inf_f=0.0)
    tight = decay_check(half_x_sq, traj, 2.0, 0.0)
    assert tight.passed
    assert abs(tight.measured["max_ratio"] - 1) < 1e-6
    bad = decay_check(half_x_sq, traj, 3.0, 0.0)
    assert not bad.passed
    assert bad.witness["t"] < 0.1
    flat = integrate_flow(zero_field, [1.0, 1.0])
    assert decay_check(zero_field, flat, 5.0, 0.0).passed


def test_length_examples(half_x_sq, half_norm_sq, zero_field):
    t1 = integrate_flow(half_x_sq, [1.0], inf_f=0.0)
    c1 = length_check(t1, 2.0, 0.0)
    assert c1.passed and abs(t1.arclength - 1) < 1e-6
    assert length_bound(2.0, 0.5, 0.0) == pytest.approx(1.0)
    t2 = integrate_flow(half_norm_sq, [3.0, 4.0], inf_f=0.0)
    assert abs(t2.arclength - 5) < 1e-6
    assert "derived normalization" in c1.note
    t3 = integrate_flow(zero_field, [1.0, 1.0])
    c3 = length_check(t3, 1.0, 0.0)
    assert c3.passed and c3.measured["bound"] == 0


def test_retraction_examples(half_norm_sq, sine_graph):
    g = np.linspace(-1, 1, 5)
    grid = [[a, b] for a in g for b in g]
    chk = retraction_check(half_norm_sq, grid, C=2.0, inf_f=0.0)
    assert chk.passed
    assert abs(chk.measured["max_ratio"] - 1) < 1e-6 and abs(chk.measured["min_ratio"] - 1) < 1e-6
    origin = [r for r in chk.measured["points"] if r["y"] == [0.0, 0.0]][0]
    assert origin["displacement"] == 0
    g2 = np.linspace(-2, 2, 5)
    chk2 = retraction_check(sine_graph, [[a, b] for a in g2 for b in g2], C=4.0, inf_f=0.0)
    assert chk2.passed


def test_basin_witness_examples(half_norm_sq, sine_graph, zero_field):
    y = basin_witness(half_norm_sq, [0.0, 0.0], 1.0, inf_f=0.0)
    assert np.linalg.norm(y) == pytest.approx(1.0)
    y2 = basin_witness(sine_graph, [0.0, 0.0], 0.5, inf_f=0.0)
    assert sine_graph.eval(y2) > 0 and np.linalg.norm(y2) <= 0.5
    lim = flow_limit(sine_graph, y2, inf_f=0.0)
    assert np.linalg.norm(lim) <= 1e-4
    with pytest.raises(NoWitnessFound):
        basin_witness(zero_field, [0.0, 0.0], 0.5, inf_f=0.0)


def test_csv_dump(tmp_path, half_norm_sq):
    traj = integrate_flow(half_norm_sq, [1.0, 2.0])
    path = tmp_path / "t.csv"
    traj.write_csv(path)
    header, rows = read_trajectory_csv(path)
    assert header == ["t", "x0", "x1", "f", "gradnorm", "arclen"]
    assert rows.shape == (len(traj.times), 6)
    assert np.array_equal(rows[:, 0], traj.times)
    assert np.array_equal(rows[:, 1:3], traj.states)
    assert np.array_equal(rows[:, 5], traj.arclengths)


starts = st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=2)


@given(starts)
@example([0.0, 1.0003982828369915])
def test_monotone_f_and_triangle_inequality(x0):
    f = catalogue("sq_dist_sphere")
    if np.linalg.norm(x0) < 0.05:
        return
    cfg = FlowConfig()
    traj = integrate_flow(f, x0, cfg, inf_f=0.0)
    slack = 10 * cfg.rel_tol * (traj.f_values[0] + cfg.abs_tol)
    assert np.all(np.diff(traj.f_values) <= slack)
    assert traj.arclength >= np.linalg.norm(traj.terminal - traj.x0) * (1 - 1e-12)
    assert len(traj.times) == len(traj.states) == len(traj.f_values)
    assert traj.times[0] == 0 and np.all(np.diff(traj.times) > 0)


@given(st.floats(0.2, 3), st.floats(0.2, 3))
def test_semigroup(t1, t2):
    f = catalogue("quadratic_psd", Q=0.5 * np.eye(2))
    x0 = np.array([1.0, -0.5])
    cfg = FlowConfig(stop_grad_norm=1e-300, stop_f_gap=1e-300)
    a = integrate_flow(f, x0, cfg, t_stops=[t1])
    mid = state_at(a, t1)
    b = integrate_flow(f, mid, cfg, t_stops=[t2])
    c = integrate_flow(f, x0, cfg, t_stops=[t1 + t2])
    two_step = state_at(b, t2)
    direct = state_at(c, t1 + t2)
    assert np.linalg.norm(two_step - direct) <= 10 * (cfg.rel_tol * np.linalg.norm(x0) + cfg.abs_tol)


CATALOGUE_PL = [
    ("quadratic_psd", {"Q": [[1.0, 0.2], [0.2, 0.5]]}, Box([-2, -2], [2, 2])),
    ("quadratic_psd", {"Q": [[1.0, 0.0], [0.0, 0.0]]}, Box([-2, -2], [2, 2])),
    ("half_sq_dist_interval", {"a": 0.0, "b": 1.0}, Box([-2], [3])),
    ("cylinder_lift", {"f": {"name": "quadratic_psd", "params": {"Q": [[0.5]]}}, "k": 1}, Box([-2, -2], [2, 2])),
]


@pytest.mark.parametrize("name,params,box", CATALOGUE_PL, ids=["quad_pd", "quad_psd", "interval", "lift"])
def test_decay_with_known_constant(name, params, box):
    f = catalogue(name, **params)
    for x0 in sample_region(box, 20, seed=11):
        traj = integrate_flow(f, x0, inf_f=f.known_inf)
        assert decay_check(f, traj, f.known_pl_constant, f.known_inf).passed


def test_decay_sine_graph(sine_graph):
    for x0 in sample_region(Box([-2, -2], [2, 2]), 20, seed=11):
        traj = integrate_flow(sine_graph, x0, inf_f=0.0)
        assert decay_check(sine_graph, traj, 4.0, 0.0).passed


def test_config_from_json():
    cfg = FlowConfig.from_json({"rel_tol": 1e-6, "max_steps": 10})
    assert cfg.rel_tol == 1e-6 and cfg.max_steps == 10 and cfg.abs_tol == 1e-10
    with pytest.raises(Exception):
        FlowConfig(rel_tol=-1)
