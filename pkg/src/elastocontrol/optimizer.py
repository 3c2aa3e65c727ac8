"""Gradient ascent on (xi, tau): one Armijo backtracking step, then Barzilai--Borwein.

The control is stored on the physical time grid of the current ``tau``.  When
``tau`` moves, the control is transported so that it stays fixed in warped
time (the variable the gradient refers to).  The tau block is scaled by
``theta = T / |G_xi(x0)|`` so both blocks move comparably; the BB inner
product uses the matching metric ``<dxi, dxi>_{L2} + dtau^2 / theta``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import time_warp
from .fem import NonInjectiveError
from .forward import NewtonDivergenceError, SingularSystemError
from .objective import GradientPair, ObjectiveConfig, evaluate
from .problem import Problem

log = logging.getLogger(__name__)

SOLVER_ERRORS = (NonInjectiveError, NewtonDivergenceError, SingularSystemError,
                 FloatingPointError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class OptimizerConfig:
    armijo_factor: float = 0.5
    stop_tol: float = 1e-10
    max_iters: int = 200
    tau_bounds: tuple | None = None
    s_min: float = 1e-6
    s_max: float = 1e2
    initial_step: float = 1.0
    max_halvings: int = 60
    safeguard: float = 10.0

    def __post_init__(self):
        if not (0.0 < self.armijo_factor < 1.0):
            raise ValueError("armijo_factor must lie in (0, 1)")
        if not (0.0 < self.s_min <= self.s_max):
            raise ValueError("need 0 < s_min <= s_max")
        if self.tau_bounds is not None and not (self.tau_bounds[0] < self.tau_bounds[1]):
            raise ValueError("tau_bounds must be ordered")
        if self.stop_tol < 0 or self.max_iters < 0:
            raise ValueError("stop_tol and max_iters must be non-negative")


@dataclass
class Point:
    xi: np.ndarray
    tau: float
    J: float
    grad: GradientPair
    extra: object = None


class OptimizationAborted(RuntimeError):
    pass


class PDEEvaluator:
    """Objective and gradient of the state-constrained problem."""

    def __init__(self, problem: Problem, objective: ObjectiveConfig):
        self.problem = problem
        self.objective = objective
        self.T = problem.grid.T
        self.dt = problem.grid.dt
        self.shape = (problem.grid.steps, problem.mesh.n_control)
        self.control_mass = problem.control_mass
        self.eps = objective.window(self.T, self.dt)[0]
        self.count = 0

    def __call__(self, xi, tau) -> Point:
        self.count += 1
        ev = evaluate(self.problem, xi, tau, self.objective)
        return Point(xi, tau, ev.J, ev.grad, ev.state)

    def transport(self, xi, tau_from, tau_to):
        if tau_from == tau_to:
            return xi
        g = self.problem.grid
        p_from = self.objective.warp(g.T, tau_from, g.dt)
        return time_warp.remap_control(xi, g.times, p_from, p_from.with_tau(tau_to))

    def inner(self, a, b):
        return float(self.dt * np.einsum("ki,ij,kj->", a, self.control_mass, b))


class QuadraticSurrogate:
    """Concave quadratic test objective with a known maximiser.

    ``J = -(a/2) |xi - xi_star|^2_{L2} - (b/2) (tau - tau_star)^2``; used to
    exercise the optimizer without PDE solves.
    """

    def __init__(self, xi_star, tau_star, a, b, T, dt, control_mass=None, eps=0.0):
        self.xi_star = np.asarray(xi_star, dtype=float)
        self.tau_star = float(tau_star)
        self.a, self.b = float(a), float(b)
        self.T, self.dt, self.eps = T, dt, eps
        self.shape = self.xi_star.shape
        self.control_mass = np.eye(self.shape[1]) if control_mass is None else control_mass
        self.count = 0

    def __call__(self, xi, tau) -> Point:
        self.count += 1
        d = xi - self.xi_star
        J = -0.5 * self.a * self.inner(d, d) - 0.5 * self.b * (tau - self.tau_star) ** 2
        rep = -self.a * d
        cov = self.dt * rep @ self.control_mass
        g = GradientPair(cov, rep, -self.b * (tau - self.tau_star), self.dt, self.control_mass)
        return Point(xi, tau, J, g)

    def transport(self, xi, tau_from, tau_to):
        return xi

    def inner(self, a, b):
        return float(self.dt * np.einsum("ki,ij,kj->", a, self.control_mass, b))


@dataclass
class OptimizerReport:
    iterations: list
    xi: np.ndarray
    tau: float
    J: float
    grad_norm: float
    grad_norm_xi: float
    grad_tau: float
    reason: str
    converged: bool
    evaluations: int
    J_initial: float
    final: Point | None = field(default=None, repr=False)

    def log_rows(self):
        return [(r["iter"], r["J"], r["grad_norm_xi"], r["grad_tau"], r["tau"], r["step"])
                for r in self.iterations]


def bb_step(dx_xi, dx_tau, dg_xi, dg_tau, inner, theta=1.0, s_min=1e-6, s_max=1e2, fallback=None):
    """Long Barzilai--Borwein step for ascent, clamped to ``[s_min, s_max]``.

    ``s = <dx, dx> / -<dx, dg>`` in the metric ``<.,.>_{L2} + tau tau / theta``.
    Returns ``(step, used_fallback)``; the fallback is taken when the
    curvature estimate is zero, negative or not finite.
    """
    num = inner(dx_xi, dx_xi) + dx_tau * dx_tau / theta
    den = -(inner(dx_xi, dg_xi) + dx_tau * dg_tau)
    if not (den > 0.0 and np.isfinite(num) and np.isfinite(den)) or num == 0.0:
        if fallback is None:
            raise ZeroDivisionError("no usable curvature and no fallback step")
        return float(np.clip(fallback, s_min, s_max)), True
    return float(np.clip(num / den, s_min, s_max)), False


def _bounds(cfg: OptimizerConfig, T, eps):
    if cfg.tau_bounds is not None:
        lo, hi = cfg.tau_bounds
    else:
        lo, hi = T / 100.0, T - eps - T / 100.0
    if not (0.0 < lo < hi < T - eps):
        raise ValueError("tau_bounds must lie inside (0, T - eps)")
    return lo, hi


def projected_norms(pt: Point, inner, lo, hi):
    """``(|G_xi|, projected G_tau)``; the tau component is dropped when it pushes out of bounds."""
    g_tau = pt.grad.tau
    if (pt.tau <= lo and g_tau < 0) or (pt.tau >= hi and g_tau > 0):
        g_tau = 0.0
    return float(np.sqrt(max(inner(pt.grad.xi, pt.grad.xi), 0.0))), float(g_tau)


def _trial(evaluator, pt: Point, s, theta, lo, hi):
    tau = float(np.clip(pt.tau + s * theta * pt.grad.tau, lo, hi))
    xi = evaluator.transport(pt.xi + s * pt.grad.xi, pt.tau, tau)
    return evaluator(xi, tau)


def armijo_bootstrap(evaluator, x0: Point, cfg: OptimizerConfig, theta=1.0, bounds=None):
    """First iterate along the gradient, shrinking ``s0 * factor**n`` until J increases.

    Returns ``(x1, n, step)``.  A stationary start is returned unchanged.
    """
    lo, hi = bounds if bounds is not None else _bounds(cfg, evaluator.T, evaluator.eps)
    gx, gt = projected_norms(x0, evaluator.inner, lo, hi)
    if gx == 0.0 and gt == 0.0:
        return x0, 0, 0.0
    s = cfg.initial_step
    for n in range(cfg.max_halvings + 1):
        try:
            trial = _trial(evaluator, x0, s, theta, lo, hi)
        except SOLVER_ERRORS as exc:
            log.info("armijo trial %d failed: %s", n, exc)
        else:
            if trial.J > x0.J:
                return trial, n, s
        s *= cfg.armijo_factor
    raise OptimizationAborted(f"no ascent within {cfg.max_halvings} step reductions")


def optimize(evaluator, cfg: OptimizerConfig = OptimizerConfig(), xi0=None, tau0=None,
             callback=None) -> OptimizerReport:
    """Maximise J from ``(xi0, tau0)`` (default ``(0, T/2)``).

    ``evaluator`` maps ``(xi, tau)`` to a :class:`Point`; see
    :class:`PDEEvaluator` and :class:`QuadraticSurrogate`.
    """
    T = evaluator.T
    lo, hi = _bounds(cfg, T, evaluator.eps)
    xi0 = np.zeros(evaluator.shape) if xi0 is None else np.asarray(xi0, dtype=float)
    tau0 = 0.5 * T if tau0 is None else float(tau0)
    inner = evaluator.inner
    rows = []

    def record(it, pt, step):
        gx, gt = projected_norms(pt, inner, lo, hi)
        row = {"iter": it, "J": pt.J, "grad_norm_xi": gx, "grad_tau": gt, "tau": pt.tau, "step": step}
        rows.append(row)
        log.info("iter %d J=%.12e |G_xi|=%.3e G_tau=%.3e tau=%.6f step=%.3e", it, pt.J, gx, gt, pt.tau, step)
        if callback is not None:
            callback(row, pt)
        return float(np.hypot(gx, gt))

    def report(pt, reason, converged):
        gx, gt = projected_norms(pt, inner, lo, hi)
        return OptimizerReport(rows, pt.xi, pt.tau, pt.J, float(np.hypot(gx, gt)), gx, gt, reason,
                               converged, evaluator.count, x0.J, pt)

    x0 = evaluator(xi0, tau0)
    gnorm = record(0, x0, 0.0)
    if gnorm <= cfg.stop_tol:
        return report(x0, "converged", True)
    gx0 = projected_norms(x0, inner, lo, hi)[0]
    theta = T / gx0 if gx0 > 0 else 1.0
    floor = x0.J - cfg.safeguard * abs(x0.J)

    best = x0
    try:
        cur, _, step = armijo_bootstrap(evaluator, x0, cfg, theta, (lo, hi))
    except OptimizationAborted as exc:
        return report(x0, f"aborted: {exc}", False)
    prev = x0
    it = 1
    gnorm = record(it, cur, step)
    if cur.J > best.J:
        best = cur
    while gnorm > cfg.stop_tol and it < cfg.max_iters:
        it += 1
        dxi = cur.xi - evaluator.transport(prev.xi, prev.tau, cur.tau)
        dgx = cur.grad.xi - evaluator.transport(prev.grad.xi, prev.tau, cur.tau)
        s, _ = bb_step(dxi, cur.tau - prev.tau, dgx, cur.grad.tau - prev.grad.tau, inner, theta,
                       cfg.s_min, cfg.s_max, fallback=step)
        nxt = None
        for _ in range(cfg.max_halvings + 1):
            try:
                nxt = _trial(evaluator, cur, s, theta, lo, hi)
                break
            except SOLVER_ERRORS as exc:
                log.info("BB trial failed (%s); halving step", exc)
                s *= 0.5
        if nxt is None:
            return report(best, "aborted: solver failures along the search direction", False)
        move = np.sqrt(inner(nxt.xi - cur.xi, nxt.xi - cur.xi)) + abs(nxt.tau - cur.tau)
        if move <= 1e-14 * (np.sqrt(inner(cur.xi, cur.xi)) + cur.tau):
            # the admissible steps have shrunk below rounding; the iterate cannot move
            return report(best, "aborted: step underflow", False)
        if nxt.J < floor:
            # non-monotone excursion: restart from the best iterate
            log.info("safeguard restart from best iterate (J=%.6e)", best.J)
            try:
                nxt, _, s = armijo_bootstrap(evaluator, best, cfg, theta, (lo, hi))
            except OptimizationAborted as exc:
                return report(best, f"aborted: {exc}", False)
            prev = best
        else:
            prev = cur
        cur, step = nxt, s
        if cur.J > best.J:
            best = cur
        gnorm = record(it, cur, step)
    if gnorm <= cfg.stop_tol:
        return report(cur, "converged", True)
    return report(cur, "max_iters", False)
