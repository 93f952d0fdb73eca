"""Gradient-flow integration and the bounds a PL inequality implies along it.

The flow ``y' = -grad f(y)`` is integrated with the Dormand-Prince 5(4)
embedded pair (FSAL, PI step-size control, 4th-order dense output). Arc
length is integrated per step with Gauss-Legendre quadrature of the norm of
the dense-output derivative.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import NoWitnessFound, NonFiniteValue, NotConverged, StepSizeUnderflow
from .parallel import pmap
from .reporting import Check

EPS_CHECK = 1e-6

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# dense output: y(t + s h) = y + h K^T P [s, s^2, s^3, s^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)
_GL_S = 0.5 * (_GL_NODES + 1.0)
_GL_W = 0.5 * _GL_WEIGHTS
# d/ds of [s, s^2, s^3, s^4] at the quadrature nodes, shape (4, 5)
_DS = np.vstack([np.ones_like(_GL_S), 2 * _GL_S, 3 * _GL_S**2, 4 * _GL_S**3])

_SAFETY = 0.9
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


@dataclass(frozen=True)
class FlowConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_time: float = 50.0
    max_steps: int = 1_000_000
    stop_grad_norm: float = 1e-10
    stop_f_gap: float = 1e-16

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_time", "stop_grad_norm", "stop_f_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"FlowConfig.{name} must be positive")
        if int(self.max_steps) < 1:
            raise ValueError("FlowConfig.max_steps must be >= 1")

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj or {})
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown flow config keys {sorted(unknown)}")
        return cls(**obj)


@dataclass
class Trajectory:
    x0: np.ndarray
    times: np.ndarray
    states: np.ndarray
    f_values: np.ndarray
    grad_norms: np.ndarray
    arclengths: np.ndarray  # cumulative, one entry per accepted state
    converged: bool
    stop_reason: str
    inf_f: Optional[float] = None
    arclength_method: str = "dense_quadrature"
    chord_length: float = 0.0
    n_rejected: int = 0

    @property
    def terminal(self):
        return self.states[-1]

    @property
    def arclength(self):
        return float(self.arclengths[-1])

    def summary(self):
        return {
            "x0": self.x0.tolist(),
            "terminal": self.terminal.tolist(),
            "t_final": float(self.times[-1]),
            "n_steps": int(len(self.times) - 1),
            "n_rejected": self.n_rejected,
            "f0": float(self.f_values[0]),
            "f_final": float(self.f_values[-1]),
            "arclength": self.arclength,
            "chord_length": self.chord_length,
            "arclength_method": self.arclength_method,
            "converged": self.converged,
            "stop_reason": self.stop_reason,
        }

    def write_csv(self, path):
        """Header ``t,x0,...,x{n-1},f,gradnorm,arclen``; 17 significant digits."""
        n = self.states.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *[f"x{i}" for i in range(n)], "f", "gradnorm", "arclen"])
            for k in range(len(self.times)):
                row = [self.times[k], *self.states[k], self.f_values[k], self.grad_norms[k], self.arclengths[k]]
                w.writerow([f"{float(v):.17g}" for v in row])


def read_trajectory_csv(path):
    """Return ``(header, rows)`` of a trajectory CSV as a float array."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=np.float64)


def _rhs(f, y):
    g = f.grad(y)
    return -g


def _initial_step(f, y0, k0, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((k0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * k0
    k1 = _rhs(f, y1)
    d2 = np.sqrt(np.mean(((k1 - k0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def integrate_flow(f, x0, cfg=None, inf_f=None, t_stops=()):
    """Integrate the gradient flow of ``f`` from ``x0``.

    Stops when ``|grad f| < stop_grad_norm`` (``grad_small``), when
    ``f - inf_f < stop_f_gap`` (``f_gap_small``, only if an infimum is known),
    at ``max_time`` or after ``max_steps`` accepted steps. ``t_stops`` are
    times the integrator lands on exactly. A step that raises ``f`` by more
    than ``10 * rel_tol * (f0 + abs_tol)`` is rejected like an inaccurate one.

    When the infimum is known, the local error is also measured by its
    first-order effect on ``f`` relative to the remaining gap ``f - inf_f``.
    The state tolerance alone lets ``abs_tol`` dominate once the state is
    small, which destroys the relative accuracy of ``f - inf_f`` that the
    decay and length bounds are checked against.
    """
    cfg = cfg or FlowConfig()
    if inf_f is None:
        inf_f = f.known_inf
    y = np.array(x0, dtype=np.float64).reshape(-1)
    x0 = y.copy()
    fy = f.eval(y)
    k = _rhs(f, y)
    gn = float(np.linalg.norm(k))
    f0 = fy
    mono_slack = 10 * cfg.rel_tol * (abs(f0) + cfg.abs_tol)

    times, states, fvals, gnorms, arcs = [0.0], [y.copy()], [fy], [gn], [0.0]
    stops = sorted(float(s) for s in t_stops if 0 < s < cfg.max_time)
    t = 0.0
    arc = chord = 0.0
    n_rej = 0
    err_old = 1e-4

    def stop_reason():
        if gn < cfg.stop_grad_norm:
            return "grad_small"
        if inf_f is not None and fy - inf_f < cfg.stop_f_gap:
            return "f_gap_small"
        if t >= cfg.max_time:
            return "max_time"
        if len(times) - 1 >= cfg.max_steps:
            return "max_steps"
        return None

    reason = stop_reason()
    h = _initial_step(f, y, k, cfg.rel_tol, cfg.abs_tol) if reason is None else 0.0
    K = np.empty((7, y.size))
    while reason is None:
        target = cfg.max_time
        while stops and stops[0] <= t:
            stops.pop(0)
        if stops:
            target = min(target, stops[0])
        h_eff = min(h, target - t)
        if h_eff < 16 * np.finfo(float).eps * max(1.0, abs(t)):
            raise StepSizeUnderflow(f"step size underflow at t={t:.6g} (non-smooth or stiff field?)")

        K[0] = k
        try:
            for i in range(1, 6):
                K[i] = _rhs(f, y + h_eff * (np.asarray(_A[i]) @ K[:i]))
            y_new = y + h_eff * (_B[:6] @ K[:6])
            K[6] = _rhs(f, y_new)
            f_new = f.eval(y_new)
        except NonFiniteValue:
            n_rej += 1
            h = 0.5 * h_eff
            continue

        err_vec = h_eff * (_E @ K)
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = float(np.sqrt(np.mean((err_vec / scale) ** 2)))
        if inf_f is not None:
            # first-order error induced in f, relative to the remaining gap
            f_err = abs(float(K[6] @ err_vec))
            err = max(err, f_err / (cfg.rel_tol * (max(f_new - inf_f, 0.0) + cfg.stop_f_gap)))
        increased = f_new > fy + mono_slack
        if err <= 1.0 and not increased:
            Q = K.T @ _P
            speeds = np.linalg.norm(Q @ _DS, axis=0)
            seg = float(np.linalg.norm(y_new - y))
            # a curve is never shorter than its chord; guards quadrature roundoff on straight steps
            arc += max(h_eff * float(_GL_W @ speeds), seg)
            chord += seg
            t = t + h_eff if h_eff < target - t else target
            y, k, fy = y_new, K[6].copy(), f_new
            gn = float(np.linalg.norm(k))
            times.append(t)
            states.append(y.copy())
            fvals.append(fy)
            gnorms.append(gn)
            arcs.append(arc)
            err = max(err, 1e-10)
            fac = err**_ALPHA / err_old**_BETA / _SAFETY
            h = h_eff / min(1 / _MIN_FACTOR, max(1 / _MAX_FACTOR, fac))
            err_old = err
            reason = stop_reason()
        else:
            n_rej += 1
            if increased and err <= 1.0:
                h = 0.5 * h_eff
            else:
                fac = err**_ALPHA / _SAFETY
                h = h_eff / min(1 / _MIN_FACTOR, fac)

    return Trajectory(
        x0=x0,
        times=np.array(times),
        states=np.array(states),
        f_values=np.array(fvals),
        grad_norms=np.array(gnorms),
        arclengths=np.array(arcs),
        converged=reason in ("grad_small", "f_gap_small"),
        stop_reason=reason,
        inf_f=inf_f,
        chord_length=chord,
        n_rejected=n_rej,
    )


def state_at(traj, t):
    """State at an accepted time ``t`` (exact match required)."""
    idx = np.flatnonzero(np.isclose(traj.times, t, rtol=0, atol=1e-12))
    if idx.size == 0:
        raise KeyError(f"t={t} is not an accepted time; pass it in t_stops")
    return traj.states[idx[0]]


def flow_limit(f, x0, cfg=None, inf_f=None):
    """The limit point of the flow from ``x0``, i.e. the retraction onto argmin."""
    traj = integrate_flow(f, x0, cfg, inf_f)
    if not traj.converged:
        raise NotConverged(
            f"flow from {np.asarray(x0).tolist()} stopped on {traj.stop_reason} "
            f"with |grad f| = {traj.grad_norms[-1]:.3g}"
        )
    return traj.terminal


def decay_check(f, traj, C, inf_f, eps=EPS_CHECK):
    """``f(y_t) - inf <= exp(-C t) (f(y_0) - inf)`` at every accepted step."""
    gap = traj.f_values - inf_f
    envelope = np.exp(-C * traj.times) * gap[0]
    ok = gap <= envelope * (1 + eps) + 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(envelope > 0, gap / envelope, np.where(gap <= 0, 1.0, np.inf))
    witness = None
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        witness = {"t": float(traj.times[i]), "f": float(traj.f_values[i]), "bound": float(envelope[i] + inf_f)}
    return Check(
        name="exponential_decay",
        passed=bool(ok.all()),
        measured={
            "C": float(C),
            "inf_f": float(inf_f),
            "max_ratio": float(np.max(ratios)),
            "min_ratio": float(np.min(ratios)),
            "n_steps": int(len(traj.times)),
            "eps_check": eps,
        },
        witness=witness,
    )


def length_bound(C, f0, inf_f):
    return 2.0 / math.sqrt(C) * math.sqrt(max(f0 - inf_f, 0.0))


def length_check(traj, C, inf_f, f0=None, eps=EPS_CHECK):
    """``arclength <= (2 / sqrt(C)) sqrt(f0 - inf)``."""
    f0 = float(traj.f_values[0]) if f0 is None else float(f0)
    bound = length_bound(C, f0, inf_f)
    L = traj.arclength
    passed = L <= bound * (1 + eps)
    return Check(
        name="trajectory_length",
        passed=bool(passed),
        measured={
            "C": float(C),
            "arclength": L,
            "chord_length": traj.chord_length,
            "bound": bound,
            "ratio": L / bound if bound > 0 else (0.0 if L == 0 else math.inf),
            "arclength_method": traj.arclength_method,
            "converged": traj.converged,
            "eps_check": eps,
        },
        witness=None if passed else {"arclength": L, "bound": bound},
        note="derived normalization: general-C factor 2/sqrt(C)",
    )


def retraction_check(f, grid, cfg=None, C=None, inf_f=None, eps=EPS_CHECK):
    """Displacement bound for the limit map and fixed points on argmin."""
    cfg = cfg or FlowConfig()
    C = f.known_pl_constant if C is None else C
    inf_f = f.known_inf if inf_f is None else inf_f
    grid = [np.asarray(y, dtype=np.float64) for y in grid]
    limits = pmap(lambda y: flow_limit(f, y, cfg, inf_f), grid)
    rows, violations = [], []
    max_ratio = 0.0
    for y, lim in zip(grid, limits):
        disp = float(np.linalg.norm(lim - y))
        gap = f.eval(y) - inf_f
        bound = length_bound(C, gap + inf_f, inf_f)
        row = {"y": y.tolist(), "limit": lim.tolist(), "displacement": disp, "bound": bound}
        if gap < cfg.stop_f_gap:
            row["fixed_point"] = disp <= 1e-8
            if not row["fixed_point"]:
                violations.append(row)
        else:
            row["ratio"] = disp / bound
            max_ratio = max(max_ratio, row["ratio"])
            if disp > bound * (1 + eps):
                violations.append(row)
        rows.append(row)
    ratios = [r["ratio"] for r in rows if "ratio" in r]
    return Check(
        name="retraction_bound",
        passed=not violations,
        measured={
            "C": float(C),
            "max_ratio": max_ratio,
            "min_ratio": min(ratios) if ratios else None,
            "n_points": len(rows),
            "n_fixed_points": sum("fixed_point" in r for r in rows),
            "points": rows,
        },
        witness=violations[0] if violations else None,
        note="derived normalization: general-C factor 2/sqrt(C)",
    )


def _directions(f, x, n_random=8, seed=0):
    """Candidate directions: Hessian range first (normal to argmin), then axes, then random."""
    n = f.dim
    dirs = []
    try:
        w, V = np.linalg.eigh(f.hessian(x))
        scale = max(1.0, float(np.max(np.abs(w))))
        for i in np.argsort(-w):
            if w[i] > 1e-8 * scale:
                dirs += [V[:, i], -V[:, i]]
    except NonFiniteValue:
        pass
    eye = np.eye(n)
    for i in range(n):
        dirs += [eye[i], -eye[i]]
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        u = rng.standard_normal(n)
        dirs.append(u / np.linalg.norm(u))
    return dirs


def basin_witness(f, minimizer, search_radius, cfg=None, inf_f=None, min_radius=1e-5, tol=None):
    """A point ``y != minimizer`` whose flow limit is ``minimizer``.

    Radii ``r, r/2, r/4, ...`` down to ``min_radius`` are tried in turn, each
    with a fixed list of directions.
    """
    cfg = cfg or FlowConfig()
    inf_f = f.known_inf if inf_f is None else inf_f
    x = np.asarray(minimizer, dtype=np.float64)
    if inf_f is None:
        inf_f = f.eval(x)
    tol = max(1e-6, 2 * cfg.stop_grad_norm) if tol is None else tol
    dirs = _directions(f, x)
    r = float(search_radius)
    while r >= min_radius:
        for u in dirs:
            y = x + r * u
            if f.eval(y) - inf_f < cfg.stop_f_gap:
                continue
            try:
                lim = flow_limit(f, y, cfg, inf_f)
            except (NotConverged, StepSizeUnderflow, NonFiniteValue):
                continue
            if np.linalg.norm(lim - x) <= tol:
                return y
        r /= 2
    raise NoWitnessFound(
        "no nearby point flows to the minimizer; f may be locally constant (dim argmin = n)"
    )
