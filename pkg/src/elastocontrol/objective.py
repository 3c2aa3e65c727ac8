"""Objective functional, Hamiltonian and the (xi, tau) gradient.

The objective to be maximised is::

    J(xi, tau) = int_0^T c(u, v, xi) dt + phi1(tau) + phi2(T)

with ``c = -(alpha/2) |xi|^2_{L2(omega)}`` plus optional quadratic tracking
terms, ``phi1`` the boundary pressure at ``tau`` (or its forward difference
quotient over ``[tau, tau + eps]``) and an optional quadratic terminal term.
The tau-derivative is taken with the control held fixed in the warped
reference time, so the control moves with tau.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem, time_warp
from .adjoint import AdjointTrajectory, jump_interpolation, solve_adjoint
from .forward import StateTrajectory, solve_forward
from .problem import Problem

KINDS = ("pressure_at_tau", "pressure_difference_quotient")


@dataclass(frozen=True)
class ObjectiveConfig:
    """Weights and the kind of point functional.

    Parameters
    ----------
    alpha : float
        Control cost weight, must be positive.
    kind : {'pressure_at_tau', 'pressure_difference_quotient'}
    eps, eps_ref : float, optional
        Physical and reference window of the difference quotient.  Default to
        ``dt`` and ``2 dt / T``; ignored for ``pressure_at_tau``.
    terminal_u, terminal_v : float
        Weights of ``-(w/2)|u(T)|^2_M`` and ``-(w/2)|v(T)|^2_M``.
    track_u, track_v : float
        Weights of the running terms ``-(w/2)|u|^2_M`` and ``-(w/2)|v|^2_M``.
    """

    alpha: float = 2e-3
    kind: str = "pressure_at_tau"
    eps: float | None = None
    eps_ref: float | None = None
    terminal_u: float = 0.0
    terminal_v: float = 0.0
    track_u: float = 0.0
    track_v: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")

    def window(self, T, dt):
        if self.kind == "pressure_at_tau":
            return 0.0, 0.0
        eps = dt if self.eps is None else self.eps
        eps_ref = 2.0 * dt / T if self.eps_ref is None else self.eps_ref
        return eps, eps_ref

    def warp(self, T, tau, dt):
        eps, eps_ref = self.window(T, dt)
        return time_warp.WarpParams(T, tau, eps, eps_ref)

    def pressure_terms(self, tau, dt):
        """``phi1`` as ``[(t, weight), ...]`` acting on the pressure."""
        if self.kind == "pressure_at_tau":
            return [(tau, 1.0)]
        eps = dt if self.eps is None else self.eps
        return [(tau + eps, 1.0 / eps), (tau, -1.0 / eps)]

    @property
    def tracking(self):
        return self.track_u != 0.0 or self.track_v != 0.0

    def running_state_cost(self, problem: Problem, state: StateTrajectory):
        """Tracking part of ``c`` at every grid time."""
        M = problem.mass
        cu = np.einsum("ki,ki->k", state.u, M.matvec(state.u.T).T)
        cv = np.einsum("ki,ki->k", state.v, M.matvec(state.v.T).T)
        return -0.5 * (self.track_u * cu + self.track_v * cv)

    def state_sources(self, problem: Problem, state: StateTrajectory):
        if not self.tracking:
            return None
        M = problem.mass
        return (-self.track_u * M.matvec(state.u.T).T, -self.track_v * M.matvec(state.v.T).T)

    def terminal_cost(self, problem: Problem, state: StateTrajectory):
        M = problem.mass
        u, v = state.u[-1], state.v[-1]
        return -0.5 * (self.terminal_u * u @ M.matvec(u) + self.terminal_v * v @ M.matvec(v))

    def terminal_derivatives(self, problem: Problem, state: StateTrajectory):
        if self.terminal_u == 0.0 and self.terminal_v == 0.0:
            return None
        M = problem.mass
        return (-self.terminal_u * M.matvec(state.u[-1]), -self.terminal_v * M.matvec(state.v[-1]))


def _check_tau(tau, problem):
    if not (0.0 < tau < problem.grid.T):
        raise ValueError(f"tau={tau} must lie in (0, T)")


def control_cost(problem: Problem, xi):
    """``-(alpha/2) int |xi|^2`` per interval without the alpha factor, shape ``(steps,)``."""
    if xi is None:
        return np.zeros(problem.grid.steps)
    xi = np.asarray(xi, dtype=float)
    return -0.5 * np.einsum("ki,ij,kj->k", xi, problem.control_mass, xi)


def pressure_functional(state: StateTrajectory, grid, terms):
    total = 0.0
    for t, a in terms:
        for node, w in jump_interpolation(t, grid):
            total += a * w * state.pressure[node]
    return total


def evaluate_J(problem: Problem, state: StateTrajectory, xi, tau, objective: ObjectiveConfig):
    """Objective value for a computed trajectory.

    The control term is integrated exactly (``xi`` is constant on each
    interval), tracking terms with the trapezoidal rule, and ``phi1`` with
    linear interpolation of the pressure between grid times.
    """
    _check_tau(tau, problem)
    grid = problem.grid
    objective.warp(grid.T, tau, grid.dt)  # validates tau + eps < T
    J = objective.alpha * grid.dt * control_cost(problem, xi).sum()
    if objective.tracking:
        c = objective.running_state_cost(problem, state)
        J += grid.dt * (c.sum() - 0.5 * (c[0] + c[-1]))
    J += pressure_functional(state, grid, objective.pressure_terms(tau, grid.dt))
    J += objective.terminal_cost(problem, state)
    return float(J)


def evaluate_J_warped(problem: Problem, state: StateTrajectory, xi, tau, objective: ObjectiveConfig):
    """The same objective written in reference time ``s in [0, 2]``.

    ``int_0^2 mu_dot(s) c(s) ds + phi1(mu(1)) + phi2(mu(2))`` on the preimage of
    the time grid (plus the warp kinks), with the integrand sampled at the
    same points as the unwarped rule.
    """
    _check_tau(tau, problem)
    grid = problem.grid
    p = objective.warp(grid.T, tau, grid.dt)
    times = grid.times
    kinks = [k for k in (p.tau, p.tau + p.eps) if 0.0 < k < grid.T]
    t_pts = np.union1d(times, kinks)
    s_pts = time_warp.mu_inverse(t_pts, p)
    s_pts[0], s_pts[-1] = 0.0, 2.0
    ds = np.diff(s_pts)
    s_mid = 0.5 * (s_pts[:-1] + s_pts[1:])
    slope = time_warp.mu_dot(s_mid, p)
    t_mid = time_warp.mu(s_mid, p)
    owner = np.minimum(np.searchsorted(times, t_mid, side="right") - 1, grid.steps - 1)
    cc = objective.alpha * control_cost(problem, xi)
    J = float(np.sum(slope * ds * cc[owner]))
    if objective.tracking:
        c = np.interp(time_warp.mu(s_pts, p), times, objective.running_state_cost(problem, state))
        # trapezoid of the grid-sampled cost: piecewise linear in t, so the
        # kink points add no quadrature error
        J += float(np.sum(slope * ds * 0.5 * (c[:-1] + c[1:])))
    if objective.kind == "pressure_at_tau":
        J += pressure_functional(state, grid, [(time_warp.mu(1.0, p), 1.0)])
    else:
        t0, t1 = time_warp.mu(1.0, p), time_warp.mu(1.0 + p.eps_ref, p)
        J += pressure_functional(state, grid, [(t1, 1.0 / (t1 - t0)), (t0, -1.0 / (t1 - t0))])
    J += objective.terminal_cost(problem, state)
    return J


# ---------------------------------------------------------------------------
# Hamiltonian

def hamiltonian_terms(problem: Problem, u, v, r, pressure, zeta0, zeta1, pi, xi_k, t,
                      objective: ObjectiveConfig, volume_reference=0.0, state_cost=0.0):
    """The seven Hamiltonian terms at one instant.

    ``r`` is the internal force covector ``<sigma(grad u), grad phi_i>``.  The
    multiplier term is ``pi (int det(I + u') - volume_reference)``; with the
    default reference 0 it is the plain ``pi int det`` term.
    """
    b = problem.constraint_vector
    c = state_cost
    if xi_k is not None:
        c += objective.alpha * float(-0.5 * xi_k @ problem.control_mass @ xi_k)
    load = problem.control_matrix @ xi_k if xi_k is not None else np.zeros_like(zeta1)
    return {
        "cost": c,
        "control": -float(zeta1 @ load),
        "surface": -problem.g(t) * float(zeta1 @ b),
        "velocity": -float(zeta0 @ problem.mass.matvec(v)),
        "stress": float(zeta1 @ (problem.damping.matvec(v) + r)),
        "volume": float(pi) * (fem.volume(problem.mesh, u) - volume_reference),
        "constraint": float(pressure) * float(zeta1 @ b),
    }


def _interval_hamiltonians(problem, state, adjoint, xi, objective, volume_reference):
    steps = problem.grid.steps
    z0, z1 = adjoint.interval_means()
    forces = np.array([problem.force(u) for u in state.u])
    tmid = 0.5 * (state.times[:-1] + state.times[1:])
    sc = objective.running_state_cost(problem, state) if objective.tracking else np.zeros(steps + 1)
    out = np.empty(steps)
    for k in range(steps):
        terms = hamiltonian_terms(
            problem, 0.5 * (state.u[k] + state.u[k + 1]), 0.5 * (state.v[k] + state.v[k + 1]),
            0.5 * (forces[k] + forces[k + 1]), 0.5 * (state.pressure[k] + state.pressure[k + 1]),
            z0[k], z1[k], adjoint.pi[k], None if xi is None else xi[k], tmid[k], objective,
            volume_reference, 0.5 * (sc[k] + sc[k + 1]))
        out[k] = sum(terms.values())
    return out


def hamiltonian(problem: Problem, state: StateTrajectory, adjoint: AdjointTrajectory, xi,
                objective: ObjectiveConfig, k, volume_reference=0.0):
    """Hamiltonian on interval ``k``: state at the midpoint, interval-mean adjoint."""
    z0, z1 = adjoint.interval_means()
    r = 0.5 * (problem.force(state.u[k]) + problem.force(state.u[k + 1]))
    sc = 0.0
    if objective.tracking:
        c = objective.running_state_cost(problem, state)
        sc = 0.5 * (c[k] + c[k + 1])
    terms = hamiltonian_terms(
        problem, 0.5 * (state.u[k] + state.u[k + 1]), 0.5 * (state.v[k] + state.v[k + 1]), r,
        0.5 * (state.pressure[k] + state.pressure[k + 1]), z0[k], z1[k], adjoint.pi[k],
        None if xi is None else np.asarray(xi)[k], 0.5 * (state.times[k] + state.times[k + 1]),
        objective, volume_reference, sc)
    return sum(terms.values())


# ---------------------------------------------------------------------------
# gradient

@dataclass
class GradientPair:
    """Gradient of J in (xi, tau).

    ``xi_covector[k]`` pairs with a control perturbation through a plain dot
    product summed over intervals; ``xi`` is its Riesz representative in
    ``L2(omega x (0, T))``, the field the optimizer steps along.
    """

    xi_covector: np.ndarray
    xi: np.ndarray
    tau: float
    dt: float
    control_mass: np.ndarray

    def pair(self, dxi, dtau=0.0):
        return float(np.sum(self.xi_covector * dxi)) + self.tau * dtau

    @property
    def xi_norm(self):
        return float(np.sqrt(self.dt * np.einsum("ki,ij,kj->", self.xi, self.control_mass, self.xi)))

    def norm(self, tau_scale=1.0):
        return float(np.hypot(self.xi_norm, tau_scale * self.tau))


def gradient(problem: Problem, state: StateTrajectory, adjoint: AdjointTrajectory, xi, tau,
             objective: ObjectiveConfig, warp=None) -> GradientPair:
    grid = problem.grid
    if warp is None:
        warp = objective.warp(grid.T, tau, grid.dt)
    steps, m = grid.steps, problem.mesh.n_control
    xi = np.zeros((steps, m)) if xi is None else np.asarray(xi, dtype=float)
    Mw = problem.control_mass
    _, z1 = adjoint.interval_means()
    Bz = z1 @ problem.control_matrix  # (steps, m): B^T zeta1
    cov = grid.dt * (-objective.alpha * xi @ Mw - Bz)
    rep = -objective.alpha * xi - np.linalg.solve(Mw, Bz.T).T
    V0 = fem.volume(problem.mesh, problem.u0)
    H = _interval_hamiltonians(problem, state, adjoint, xi, objective, V0)
    # the s -> t change of variables contributes 1 / mu_dot
    w = time_warp.interval_weights(grid.times, warp, per_unit_time=True)
    g_tau = float(np.sum(w * H) * grid.dt)
    return GradientPair(cov, rep, g_tau, grid.dt, Mw)


@dataclass
class Evaluation:
    J: float
    state: StateTrajectory
    adjoint: AdjointTrajectory | None = None
    grad: GradientPair | None = None


def evaluate(problem: Problem, xi, tau, objective: ObjectiveConfig, with_gradient=True) -> Evaluation:
    """Forward solve, objective and (optionally) adjoint and gradient."""
    state = solve_forward(problem, xi, check_initial=False)
    J = evaluate_J(problem, state, xi, tau, objective)
    if not with_gradient:
        return Evaluation(J, state)
    adj = solve_adjoint(problem, state, tau, objective)
    return Evaluation(J, state, adj, gradient(problem, state, adj, xi, tau, objective))


# ---------------------------------------------------------------------------
# finite-difference verification

@dataclass
class FDRow:
    direction: int
    component: str
    h: float
    fd: float
    predicted: float

    @property
    def abs_error(self):
        return abs(self.predicted - self.fd)

    @property
    def rel_error(self):
        scale = abs(self.fd)
        return self.abs_error / scale if scale > 0 else 0.0


@dataclass
class FDReport:
    rows: list

    def best(self, component=None):
        """Smallest relative error per direction, then the worst over directions."""
        per = {}
        for r in self.rows:
            if component is not None and r.component != component:
                continue
            key = (r.component, r.direction)
            per[key] = min(per.get(key, np.inf), r.rel_error)
        return max(per.values()) if per else 0.0

    def table(self, sep="\t"):
        lines = [sep.join(["direction", "component", "h", "fd", "predicted", "abs_error", "rel_error"])]
        for r in self.rows:
            lines.append(sep.join([str(r.direction), r.component]
                                  + [repr(float(x)) for x in (r.h, r.fd, r.predicted, r.abs_error, r.rel_error)]))
        return "\n".join(lines) + "\n"


def smooth_directions(problem: Problem, count, rng, modes=4):
    """Random control directions built from a few low space-time modes."""
    times = problem.grid.times
    tm = 0.5 * (times[:-1] + times[1:]) / problem.grid.T
    x = problem.mesh.nodes[problem.mesh.omega_nodes]
    xs = (x - x[0]) / max(x[-1] - x[0], 1e-300)
    out = []
    for _ in range(count):
        a = rng.standard_normal((modes, modes))
        d = sum(a[i, j] * np.cos(np.pi * i * tm)[:, None] * np.cos(np.pi * j * xs)[None, :]
                for i in range(modes) for j in range(modes))
        out.append(d / np.sqrt(problem.grid.dt * np.einsum("ki,ij,kj->", d, problem.control_mass, d)))
    return out


def objective_with_tau(problem, xi, tau, tau_ref, objective):
    """J at ``tau`` with the control ``xi`` (given for ``tau_ref``) held fixed in warped time."""
    grid = problem.grid
    p_from = objective.warp(grid.T, tau_ref, grid.dt)
    p_to = objective.warp(grid.T, tau, grid.dt)
    moved = time_warp.remap_control(xi, grid.times, p_from, p_to)
    return evaluate(problem, moved, tau, objective, with_gradient=False).J


def fd_check(problem: Problem, xi, tau, objective: ObjectiveConfig, directions=None,
             h_schedule=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6), tau_steps=None, rng=None, n_directions=5):
    """Compare the adjoint gradient with central differences of J.

    ``xi`` directions are normalised in ``L2(omega x (0, T))`` and scaled by
    ``h * max(1, |xi|)``; the tau difference uses steps ``tau_steps``
    (default ``2 dt``) with the control remapped to stay fixed in warped time.
    """
    grid = problem.grid
    xi = np.zeros((grid.steps, problem.mesh.n_control)) if xi is None else np.asarray(xi, dtype=float)
    base = evaluate(problem, xi, tau, objective)
    G = base.grad
    if directions is None:
        rng = np.random.default_rng(0) if rng is None else rng
        directions = smooth_directions(problem, n_directions, rng)
    xnorm = max(1.0, float(np.sqrt(grid.dt * np.einsum("ki,ij,kj->", xi, problem.control_mass, xi))))
    rows = []
    for i, d in enumerate(directions):
        pred = G.pair(d)
        for h in h_schedule:
            step = h * xnorm
            Jp = evaluate(problem, xi + step * d, tau, objective, with_gradient=False).J
            Jm = evaluate(problem, xi - step * d, tau, objective, with_gradient=False).J
            rows.append(FDRow(i, "xi", step, (Jp - Jm) / (2 * step), pred))
    for h in (tau_steps if tau_steps is not None else (2 * grid.dt,)):
        Jp = objective_with_tau(problem, xi, tau + h, tau, objective)
        Jm = objective_with_tau(problem, xi, tau - h, tau, objective)
        rows.append(FDRow(0, "tau", h, (Jp - Jm) / (2 * h), G.tau))
    return FDReport(rows), base
