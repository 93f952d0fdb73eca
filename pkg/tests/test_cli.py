import json
import subprocess
import sys

import pytest

from pllab.cli import load_config, main
from pllab.errors import ConfigParseError

HALF_NORM = {"name": "quadratic_psd", "params": {"Q": [[0.5, 0.0], [0.0, 0.5]]}}
HALF_X = {"name": "quadratic_psd", "params": {"Q": [[0.5]]}}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(cfg if isinstance(cfg, str) else json.dumps(cfg))
    return str(path)


def run(tmp_path, cfg, *extra):
    out = tmp_path / "out"
    return main(["run", write(tmp_path, cfg), "--out", str(out), *extra]), out


def test_flow_config_exit_zero(tmp_path, capsys):
    code, out = run(tmp_path, {"field": HALF_NORM, "task": "flow", "task_params": {"x0": [1.0, 0.0]}})
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["schema_version"] == 1 and rep["passed"]
    names = [c["name"] for c in rep["checks"]]
    assert names == ["exponential_decay[0]", "trajectory_length[0]"]
    assert abs(rep["checks"][0]["measured"]["max_ratio"] - 1) < 1e-6
    assert (out / "trajectory_000.csv").exists() and (out / "meta.json").exists()
    assert capsys.readouterr().out.splitlines() == ["PASS exponential_decay[0]", "PASS trajectory_length[0]"]


def test_certify_violation_exit_one(tmp_path):
    cfg = {"field": HALF_X, "region": {"box": {"lower": [-2], "upper": [2]}}, "task": "certify",
           "task_params": {"claimed_C": 2.5, "n_samples": 128}}
    code, out = run(tmp_path, cfg)
    assert code == 1
    chk = json.loads((out / "report.json").read_text())["checks"][0]
    assert not chk["passed"] and chk["witness"]["ratio"] == pytest.approx(2.0, rel=1e-12)


def test_certify_estimate_only(tmp_path):
    cfg = {"field": HALF_X, "region": {"box": {"lower": [-2], "upper": [2]}}, "task": "certify"}
    code, out = run(tmp_path, cfg)
    rep = json.loads((out / "report.json").read_text())
    assert code == 0 and rep["checks"] == [] and rep["estimates"]["pl"]["c_hat"] == pytest.approx(2.0)


@pytest.mark.parametrize("cfg", [
    {"field": {"name": "no_such_field"}, "task": "flow", "task_params": {"x0": [1.0]}},
    {"field": HALF_X, "task": "flow", "task_params": {"x0": [1.0], "bogus": 1}},
    {"field": HALF_X, "task": "teleport"},
    {"field": HALF_X, "task": "flow", "colour": "red"},
    {"field": {"expr": "x1 +", "dim": 1}, "task": "flow", "task_params": {"x0": [1.0]}},
    {"field": HALF_X, "task": "certify"},
], ids=["unknown_name", "bad_param", "bad_task", "bad_top_key", "bad_expr", "missing_region"])
def test_config_errors_exit_two(tmp_path, cfg):
    assert run(tmp_path, cfg)[0] == 2


def test_malformed_json_reports_position(tmp_path, capsys):
    path = write(tmp_path, '{"task": "flow",\n  "field": }')
    with pytest.raises(ConfigParseError, match="line 2"):
        load_config(path)
    assert main(["run", path]) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_file_exit_two(tmp_path):
    assert main(["run", str(tmp_path / "absent.json")]) == 2


def test_numerical_failure_exit_three(tmp_path):
    cfg = {"field": {"expr": "log(x1)", "dim": 1}, "task": "flow", "task_params": {"x0": [-1.0]}}
    assert run(tmp_path, cfg)[0] == 3


def test_minset_and_distfield(tmp_path):
    cfg = {"field": {"expr": "x1^2 + 3*x2^2", "dim": 2}, "region": {"box": {"lower": [-1, -1], "upper": [1, 1]}},
           "task": "minset", "task_params": {"C": 4.0, "n_starts": 8}}
    code, out = run(tmp_path, cfg)
    rep = json.loads((out / "report.json").read_text())
    assert code == 0 and rep["estimates"]["model"]["singleton"]
    sphere = {"task": "distfield", "task_params": {
        "set": {"variant": "sphere", "center": [0, 0], "radius": 1.0},
        "separation": {"x_samples": [[0.5, 0.0]]}, "ray": {"x": [0.5, 0.0]}}}
    code, out = run(tmp_path, sphere)
    assert code == 1


def test_same_seed_byte_identical(tmp_path):
    cfg = write(tmp_path, {"field": HALF_NORM, "region": {"box": {"lower": [-1, -1], "upper": [1, 1]}},
                           "task": "flow", "task_params": {"n_starts": 6}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", cfg, "--out", str(a), "--seed", "7"]) == 0
    assert main(["--jobs", "3", "run", cfg, "--out", str(b), "--seed", "7"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    for i in range(6):
        name = f"trajectory_{i:03d}.csv"
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_suite_list(capsys):
    assert main(["suite", "--list"]) == 0
    ids = [line.split()[0] for line in capsys.readouterr().out.splitlines()]
    assert ids == [f"C{i}" for i in range(1, 11)]


def test_catalogue(capsys):
    assert main(["catalogue"]) == 0
    text = capsys.readouterr().out
    assert "half_sq_dist_interval" in text
    block = text.split("quadratic_psd")[1]
    assert "known_pl_constant=4" in block.splitlines()[3]


def test_usage_error_exit_two():
    assert main([]) == 2
    assert main(["run"]) == 2


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "pllab.cli", "suite", "--list"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stderr == ""
