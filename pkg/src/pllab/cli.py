"""Command-line front end: ``pllab run``, ``pllab suite``, ``pllab catalogue``.

Exit codes: 0 all checks pass, 1 a bound check failed, 2 usage or config
error, 3 numerical failure. stdout carries PASS/FAIL lines only; diagnostics
go to stderr.
"""

import argparse
import datetime
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from . import distance as D
from . import kernels, parallel
from .certify import check_pl_claim, estimate_pl_constant, quadratic_growth_check
from .errors import (
    AllPointsSkipped, ConfigParseError, NoMinimizerFound, NonFiniteValue, NotConverged, PLLabError,
    StepSizeUnderflow,
)
from .fields import field_from_json, list_catalogue, region_from_json, sample_region
from .flow import EPS_CHECK, FlowConfig, decay_check, integrate_flow, length_check, retraction_check
from .minset import build_model, constant_rank_check, hessian_gap_check, kernel_chart_probe
from .reporting import Check, dumps
from .suite import SCHEMA_VERSION, criterion_ids, run_suite

log = logging.getLogger("pllab")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERICAL_ERRORS = (NonFiniteValue, NotConverged, StepSizeUnderflow, NoMinimizerFound)

TASK_KEYS = {
    "flow": {"x0", "n_starts", "C", "inf_f", "flow", "retraction_grid"},
    "certify": {"claimed_C", "n_samples", "inf_f"},
    "growth": {"C", "argmin_points", "n_samples", "inf_f", "constant", "extra_points"},
    "minset": {"C", "n_starts", "inf_f", "flow", "r_link", "chart_points", "chart_radius"},
    "distfield": {"set", "flow_formula", "ray", "separation", "regularity"},
    "suite": set(),
}
TOP_KEYS = {"field", "region", "task", "task_params", "output_dir", "seed"}


def load_config(path):
    """Parse and validate a JSON experiment config."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"{path}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigParseError(f"{path}: top level must be an object")
    unknown = set(cfg) - TOP_KEYS
    if unknown:
        raise ConfigParseError(f"{path}: unknown key(s) {sorted(unknown)}")
    task = cfg.get("task")
    if task not in TASK_KEYS:
        raise ConfigParseError(f"{path}: key 'task' must be one of {sorted(TASK_KEYS)}, got {task!r}")
    params = cfg.get("task_params", {})
    if not isinstance(params, dict):
        raise ConfigParseError(f"{path}: key 'task_params' must be an object")
    bad = set(params) - TASK_KEYS[task]
    if bad:
        raise ConfigParseError(f"{path}: task_params key(s) {sorted(bad)} not valid for task {task!r}")
    if task not in ("suite", "distfield") and "field" not in cfg:
        raise ConfigParseError(f"{path}: key 'field' is required for task {task!r}")
    if task in ("certify", "growth", "minset") and "region" not in cfg:
        raise ConfigParseError(f"{path}: key 'region' is required for task {task!r}")
    return cfg


def _flow_cfg(params):
    return FlowConfig.from_json(params.get("flow", {}))


def _task_flow(f, region, params, seed, eps, out_dir):
    cfg = _flow_cfg(params)
    C = params.get("C", f.known_pl_constant)
    inf_f = params.get("inf_f", f.known_inf)
    if "x0" in params:
        starts = np.atleast_2d(np.asarray(params["x0"], dtype=np.float64))
    elif region is not None:
        starts = sample_region(region, int(params.get("n_starts", 8)), seed, f)
    else:
        raise ConfigParseError("flow task needs task_params.x0 or a region")
    trajs = parallel.pmap(lambda x0: integrate_flow(f, x0, cfg, inf_f), starts)
    checks, estimates = [], {"trajectories": []}
    for i, traj in enumerate(trajs):
        name = f"trajectory_{i:03d}.csv"
        traj.write_csv(os.path.join(out_dir, name))
        estimates["trajectories"].append({**traj.summary(), "csv": name})
        if C is not None and inf_f is not None:
            d = decay_check(f, traj, C, inf_f, eps)
            d.name = f"exponential_decay[{i}]"
            checks.append(d)
            if traj.converged:
                L = length_check(traj, C, inf_f, eps=eps)
                L.name = f"trajectory_length[{i}]"
                checks.append(L)
    if "retraction_grid" in params:
        checks.append(retraction_check(f, params["retraction_grid"], cfg, C, inf_f, eps))
    if C is None or inf_f is None:
        log.warning("no PL constant or infimum known; bound checks skipped")
    return checks, estimates


def _task_certify(f, region, params, seed, eps, out_dir):
    n = int(params.get("n_samples", 1024))
    inf_f = params.get("inf_f")
    if "claimed_C" in params:
        rep = check_pl_claim(f, region, params["claimed_C"], n, inf_f, seed, eps)
        chk = Check(name="pl_claim", passed=bool(rep.passed),
                    measured={"claimed": rep.claimed, "c_hat": rep.c_hat}, witness=rep.violation)
        return [chk], {"pl": rep}
    return [], {"pl": estimate_pl_constant(f, region, n, inf_f, seed)}


def _task_growth(f, region, params, seed, eps, out_dir):
    C = params.get("C", f.known_pl_constant)
    if "argmin_points" not in params:
        raise ConfigParseError("growth task needs task_params.argmin_points")
    chk = quadratic_growth_check(
        f, region, C, params["argmin_points"], int(params.get("n_samples", 500)), seed,
        params.get("inf_f"), params.get("constant", "corrected"), params.get("extra_points", ()),
    )
    return [chk], {}


def _task_minset(f, region, params, seed, eps, out_dir):
    C = params.get("C", f.known_pl_constant)
    model = build_model(f, region, C, int(params.get("n_starts", 32)), _flow_cfg(params),
                        params.get("r_link"), seed=seed, inf_f=params.get("inf_f"))
    checks = [hessian_gap_check(f, model.points, C), constant_rank_check(f, model.points, C),
              Check(name="singleton_consistency", passed=model.tension is None,
                    measured={"singleton": model.singleton, "expected_singleton": model.expected_singleton},
                    witness={"tension": model.tension} if model.tension else None)]
    for i, x in enumerate(params.get("chart_points", [])):
        c = kernel_chart_probe(f, x, model.points, params.get("chart_radius", 0.5), C)
        c.name = f"kernel_chart[{i}]"
        checks.append(c)
    return checks, {"model": model}


def _task_distfield(f, region, params, seed, eps, out_dir):
    if "set" not in params:
        raise ConfigParseError("distfield task needs task_params.set")
    F = D.closed_set_from_json(params["set"])
    checks = []
    if "flow_formula" in params:
        p = params["flow_formula"]
        checks.append(D.flow_formula_check(F, p["x"], FlowConfig.from_json(p.get("flow", {})),
                                           p.get("tol", 1e-6)))
    if "ray" in params:
        p = params["ray"]
        checks.append(D.ray_invariance_check(F, p["x"], p.get("s_grid", D.DEFAULT_S_GRID)))
    if "separation" in params:
        p = params["separation"]
        if "x_samples" in p:
            X = p["x_samples"]
        elif region is not None:
            X = sample_region(region, int(p.get("n_x", 20)), seed)
        else:
            raise ConfigParseError("separation needs x_samples or a region")
        checks.append(D.separation_convexity_test(F, X, int(p.get("y_per_x", 10)), seed=seed))
    if "regularity" in params:
        checks.append(D.regularity_probe(F, params["regularity"]["probes"]))
    return checks, {"set": F, "expected_regularity": F.expected_regularity()}


TASKS = {
    "flow": _task_flow,
    "certify": _task_certify,
    "growth": _task_growth,
    "minset": _task_minset,
    "distfield": _task_distfield,
}


def _write(out_dir, report, meta):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        fh.write(dumps(report))
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        fh.write(dumps(meta))


def _meta(argv, started, elapsed, extra=None):
    return {
        "started_utc": started,
        "wall_seconds": elapsed,
        "argv": argv,
        "jobs": parallel.get_jobs(),
        "kernel_backend": kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        **(extra or {}),
    }


def cmd_run(args, argv):
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 42))
    out_dir = args.out or cfg.get("output_dir") or "pllab-out"
    eps = args.tol if args.tol is not None else EPS_CHECK
    task = cfg["task"]
    if task == "suite":
        return _suite(seed, eps, out_dir, argv)
    f = field_from_json(cfg["field"]) if "field" in cfg else None
    region = region_from_json(cfg["region"]) if "region" in cfg else None
    os.makedirs(out_dir, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    t0 = time.perf_counter()
    checks, estimates = TASKS[task](f, region, cfg.get("task_params", {}), seed, eps, out_dir)
    report = {
        "schema_version": SCHEMA_VERSION,
        "task": task,
        "seed": seed,
        "eps_check": eps,
        "field": None if f is None else f.describe(),
        "region": None if region is None else region.to_json(),
        "checks": checks,
        "estimates": estimates,
        "passed": all(c.passed for c in checks),
    }
    _write(out_dir, report, _meta(argv, started, time.perf_counter() - t0))
    for c in checks:
        print(c.line())
    print(f"report {os.path.join(out_dir, 'report.json')}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_CHECK


def _suite(seed, eps, out_dir, argv):
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    t0 = time.perf_counter()
    report, timings, lines = run_suite(seed, eps)
    report["passed"] = all(c["passed"] for c in report["criteria"])
    _write(out_dir, report, _meta(argv, started, time.perf_counter() - t0, {"criterion_seconds": timings}))
    for line in lines:
        print(line)
    print(f"report {os.path.join(out_dir, 'report.json')}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_CHECK


def cmd_suite(args, argv):
    if args.list:
        for cid in criterion_ids():
            print(cid)
        return EXIT_OK
    seed = 42 if args.seed is None else args.seed
    eps = EPS_CHECK if args.tol is None else args.tol
    return _suite(seed, eps, args.out or "pllab-out", argv)


def cmd_catalogue(args, argv):
    sys.stdout.write(list_catalogue())
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="pllab", description="Numerical checks for gradient flows of PL functions.")
    p.add_argument("--jobs", type=int, default=None, help="worker threads (default: logical cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    s = sub.add_parser("suite", help="run the built-in acceptance suite")
    s.add_argument("--list", action="store_true", help="print criterion identifiers and exit")
    for q in (r, s):
        q.add_argument("--seed", type=int, default=None)
        q.add_argument("--out", default=None, help="output directory (default pllab-out)")
        q.add_argument("--tol", type=float, default=None, help="relative slack on bound checks (default 1e-6)")
        q.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    r.set_defaults(func=cmd_run)
    s.set_defaults(func=cmd_suite)
    c = sub.add_parser("catalogue", help="list catalogue fields")
    c.set_defaults(func=cmd_catalogue)
    return p


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="pllab: %(levelname)s: %(message)s", stream=sys.stderr)
    parallel.set_jobs(args.jobs)
    try:
        return args.func(args, argv)
    except NUMERICAL_ERRORS as exc:
        print(f"pllab: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except AllPointsSkipped as exc:
        print(f"pllab: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PLLabError, KeyError, ValueError, TypeError) as exc:
        print(f"pllab: config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
