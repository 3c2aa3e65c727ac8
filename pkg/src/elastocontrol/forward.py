"""Crank--Nicolson integration of the constrained state equation.

Semi-discrete system on the free nodes::

    u' = v
    M v' + kappa A v + r(u) + p b = B xi + g e_last
    b . u = b . u0                                   (volume constraint)

where ``b`` is the volume gradient (the last unit vector in 1D).  Each step
solves for ``u_{k+1}`` by Newton's method with a bordered linear system; the
velocity follows from ``u_{k+1} = u_k + dt (v_k + v_{k+1}) / 2``.  The control
is constant on each interval ``[t_k, t_{k+1}]``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fem, kernels
from .fem import NonInjectiveError, Tridiag
from .problem import Problem
from .tensor_calculus import det_cof, sigma

log = logging.getLogger(__name__)


class NewtonDivergenceError(RuntimeError):
    def __init__(self, step, residual):
        super().__init__(f"Newton iteration did not converge at step {step} (residual {residual:.3e})")
        self.step = step


class SingularSystemError(RuntimeError):
    pass


@dataclass
class StateTrajectory:
    """Nodal states on the time grid.

    Attributes
    ----------
    u, v : (steps + 1, n) arrays
        Displacement and velocity at ``t_k``.
    pressure : (steps + 1,) array
        Boundary pressure evaluated from ``(u_k, v_k)``; this is the quantity
        entering the objective.
    multiplier : (steps,) array
        Lagrange multiplier of the constraint on each interval (the
        interval-averaged pressure of the Crank--Nicolson scheme).
    volume_residual : (steps + 1,) array
        ``V(u_k) - V(u_0)``.
    min_jacobian : float
        Smallest ``1 + u'`` over all elements and times; non-positive values
        flag a non-injective deformation.
    """

    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    pressure: np.ndarray
    multiplier: np.ndarray
    volume_residual: np.ndarray
    newton_iterations: np.ndarray
    residual_history: list = field(default_factory=list)
    min_jacobian: float = 1.0

    @property
    def steps(self):
        return self.times.size - 1


def bordered_solve(J: Tridiag, b, rhs, c):
    """Solve ``[[J, b], [b^T, 0]] [x; lam] = [rhs; c]`` by two tridiagonal solves."""
    try:
        y = J.solve(rhs)
        if b is None:
            return y, 0.0
        z = J.solve(b)
    except (ZeroDivisionError, np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"singular bordered system: {exc}") from None
    schur = float(b @ z)
    if not np.isfinite(schur) or abs(schur) <= 1e-14 * max(1.0, float(np.abs(z).max())):
        raise SingularSystemError("singular bordered system")
    lam = (float(b @ y) - c) / schur
    x = y - lam * z
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("singular bordered system")
    return x, lam


def newton_step(J: Tridiag, b, residual, constraint_residual):
    """Newton correction ``du`` and multiplier ``lam`` solving
    ``J du + lam b = -residual`` and ``b . du = -constraint_residual``."""
    return bordered_solve(J, b, -np.asarray(residual), -float(constraint_residual))


# ---------------------------------------------------------------------------
# pressure

def recover_pressure_diagnostic(mesh, model, kappa, u, udot):
    """Boundary pressure ``-(1/|G_N|) int det(F)^-1 F^T (kappa dv/dn + sigma n)``.

    In 1D the boundary is the single point ``x = 1`` with unit measure, and
    ``F = 1 + u'(1)`` on the last element.
    """
    ug = np.diff(mesh.full(u)[-2:])[0] / mesh.lengths[-1]
    vg = np.diff(mesh.full(udot)[-2:])[0] / mesh.lengths[-1]
    F = np.array([[1.0 + ug]])
    det, _ = det_cof(F)
    if det <= 0:
        raise NonInjectiveError("non-injective deformation")
    n = np.array([mesh.normal_at_neumann])
    traction = kappa * vg * n + sigma(model, np.array([[ug]])) @ n
    return float(-(F.T @ traction)[0] / det)


def pressure_deformed_measure(mesh, model, kappa, u, udot):
    """Pressure normalised by the deformed boundary measure ``int |cof(F) n|``."""
    ug = np.diff(mesh.full(u)[-2:])[0] / mesh.lengths[-1]
    vg = np.diff(mesh.full(udot)[-2:])[0] / mesh.lengths[-1]
    F = np.array([[1.0 + ug]])
    det, cof = det_cof(F)
    if det <= 0:
        raise NonInjectiveError("non-injective deformation")
    n = np.array([mesh.normal_at_neumann])
    measure = float(np.linalg.norm(cof @ n))
    traction = kappa * vg * n + sigma(model, np.array([[ug]])) @ n
    return float(-traction[0] / measure)


def boundary_gradients(problem: Problem, u, v):
    """Last-element gradients of ``u`` and ``v`` (arrays over leading axes)."""
    L = problem.mesh.lengths[-1]
    prev_u = u[..., -2] if u.shape[-1] > 1 else 0.0 * u[..., -1]
    prev_v = v[..., -2] if v.shape[-1] > 1 else 0.0 * v[..., -1]
    return (u[..., -1] - prev_u) / L, (v[..., -1] - prev_v) / L


def boundary_stress(problem: Problem, ug):
    """First Piola stress on the last element and its derivative in ``u'``."""
    ug = np.atleast_1d(np.asarray(ug, dtype=float))
    if problem.linearized:
        k0 = problem.stiffness0.diag[-1] * problem.mesh.lengths[-1]
        return k0 * ug, np.full_like(ug, k0)
    _, P, K = kernels.element_response(problem.model.code, problem.model.param_vector(), ug)
    return P, K


def boundary_pressure(problem: Problem, u, v):
    """Vectorised boundary pressure for states stacked along leading axes."""
    ug, vg = boundary_gradients(problem, np.atleast_2d(u), np.atleast_2d(v))
    bad = np.flatnonzero(1.0 + ug <= 0)
    if bad.size:
        raise NonInjectiveError(f"non-injective deformation at step {bad[0]}")
    P, _ = boundary_stress(problem, ug)
    # det(F)^-1 F^T (kappa v' + sigma n): the F factors cancel in 1D
    p = -(problem.kappa * vg + P)
    return p if np.ndim(u) > 1 else float(p[0])


def discrete_energy(problem: Problem, u, v):
    return 0.5 * float(v @ problem.mass.matvec(v)) + problem.energy(u)


def check_compatibility(problem: Problem, tol=1e-8):
    """Warn when ``kappa dv0/dn + sigma(u0) n`` differs from ``g(0)`` at ``x = 1``."""
    ug, vg = boundary_gradients(problem, problem.u0[None], problem.v0[None])
    P, _ = boundary_stress(problem, ug)
    mismatch = float(problem.kappa * vg[0] + P[0] - problem.g(0.0))
    if abs(mismatch) > tol:
        warnings.warn(f"initial data violate the boundary compatibility condition by {mismatch:.3e}",
                      RuntimeWarning, stacklevel=3)
    return mismatch


# ---------------------------------------------------------------------------
# time stepping

def control_loads(problem: Problem, xi):
    steps, n = problem.grid.steps, problem.mesh.n_free
    if xi is None:
        return np.zeros((steps, n))
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (steps, problem.mesh.n_control):
        raise ValueError(f"control must have shape {(steps, problem.mesh.n_control)}, got {xi.shape}")
    return xi @ problem.control_matrix.T


def step_right_hand_sides(problem: Problem, xi=None, extra_load=None):
    """Known loads of every step, ``2 B xi_k + (g_k + g_{k+1}) e_last + extras``."""
    times = problem.grid.times
    rhs = 2.0 * control_loads(problem, xi)
    g = np.array([problem.g(t) for t in times])
    rhs[:, -1] += g[:-1] + g[1:]
    if extra_load is not None:
        f = np.array([extra_load(t) for t in times])
        rhs += f[:-1] + f[1:]
    return rhs


_MODES = {"none": kernels.MODE_FREE, "bordered": kernels.MODE_BORDERED,
          "augmented_lagrangian": kernels.MODE_AUGMENTED}


def solve_forward(problem: Problem, xi=None, extra_load=None, record_history=False,
                  check_initial=True, compiled=None) -> StateTrajectory:
    """Integrate the state equation over the problem's time grid.

    Parameters
    ----------
    problem : Problem
    xi : (steps, n_control) array, optional
        Nodal control on the window, constant on each time interval.
    extra_load : callable, optional
        ``t -> covector`` added to the right-hand side with trapezoidal
        weighting (used by manufactured-solution studies).
    record_history : bool
        Keep the Newton residual norms of every step (reference loop only).
    compiled : bool, optional
        Force the fused compiled loop (True) or the Python loop (False).
        Defaults to the compiled loop when numba is enabled.

    Raises
    ------
    NewtonDivergenceError
        Newton fails to converge within ``problem.newton_max_iter`` iterations.
    SingularSystemError
        The bordered system cannot be solved.
    """
    if check_initial and problem.constrained:
        check_compatibility(problem)
    rhs = step_right_hand_sides(problem, xi, extra_load)
    if compiled is None:
        compiled = kernels.USE_NUMBA and not record_history
    if compiled:
        U, Vel, lam, iters = _integrate_compiled(problem, rhs)
        history = []
    else:
        U, Vel, lam, iters, history = _integrate_python(problem, rhs, record_history)
    V0 = fem.volume(problem.mesh, problem.u0)
    vres = np.array([fem.volume(problem.mesh, u) for u in U]) - V0
    pressure = boundary_pressure(problem, U, Vel)
    full = np.concatenate([np.zeros((U.shape[0], 1)), U], axis=1)
    jmin = float(1.0 + (np.diff(full, axis=1) / problem.mesh.lengths).min())
    return StateTrajectory(problem.grid.times, U, Vel, np.asarray(pressure), 0.5 * lam,
                           vres, iters, history, jmin)


def _linear_modulus(problem):
    return float(problem.stiffness0.diag[-1] * problem.mesh.lengths[-1])


def _integrate_compiled(problem: Problem, rhs):
    M, A = problem.mass, problem.damping
    out = kernels.cn_integrate(
        problem.model.code, problem.model.param_vector(), problem.mesh.lengths,
        problem.linearized, _linear_modulus(problem), M.upper, M.diag, A.upper, A.diag,
        problem.grid.dt, np.ascontiguousarray(rhs), problem.u0.copy(), problem.v0.copy(),
        _MODES[problem.constraint], problem.al_rho, problem.al_tol, problem.newton_tol,
        problem.newton_max_iter, problem.check_injectivity)
    U, Vel, lam, iters, status, step, res = out
    if status == kernels.STATUS_NEWTON:
        raise NewtonDivergenceError(int(step), float(res))
    if status == kernels.STATUS_SINGULAR:
        raise SingularSystemError(f"singular bordered system at step {step}")
    if status == kernels.STATUS_NONINJECTIVE:
        raise NonInjectiveError(f"non-injective deformation at step {step}")
    return U, Vel, lam, iters


def _integrate_python(problem: Problem, rhs, record_history=False):
    """Reference time loop built from the vectorized assembly routines."""
    grid, mesh = problem.grid, problem.mesh
    dt, steps, n = grid.dt, grid.steps, mesh.n_free
    M = problem.mass
    S = M.scaled(4.0 / dt**2) + problem.damping.scaled(2.0 / dt)
    M4 = M.scaled(4.0 / dt)
    b = problem.constraint_vector if problem.constrained else None
    bordered = problem.constraint == "bordered"
    V0 = fem.volume(mesh, problem.u0)

    U = np.empty((steps + 1, n))
    Vel = np.empty((steps + 1, n))
    lam_out = np.zeros(steps)
    iters = np.zeros(steps, dtype=int)
    history = []
    U[0], Vel[0] = problem.u0, problem.v0
    r_k = problem.force(problem.u0)
    lam_prev = 0.0

    for k in range(steps):
        uk, vk = U[k], Vel[k]
        known = rhs[k] + M4.matvec(vk) - r_k
        scale = max(1.0, float(np.abs(known).max()), float(np.abs(r_k).max()))
        tol = problem.newton_tol * scale
        u = uk + dt * vk
        lam = lam_prev
        norms = []
        if problem.constraint == "augmented_lagrangian":
            u, lam, count = _al_step(problem, S, uk, u, known, lam, V0, tol, k, norms)
            r_k = problem.force(u)
        else:
            count = 0
            while True:
                r, K = problem.force_and_tangent(u)
                R = S.matvec(u - uk) + r - known
                cres = (fem.volume(mesh, u) - V0) if b is not None else 0.0
                res = R + lam * b if b is not None else R
                rnorm = float(np.abs(res).max())
                norms.append(rnorm)
                if rnorm <= tol and abs(cres) <= 1e-12 * max(1.0, abs(V0)):
                    break
                if count >= problem.newton_max_iter or not np.isfinite(rnorm):
                    raise NewtonDivergenceError(k, rnorm)
                du, lam = newton_step(S + K, b if bordered else None, R, cres)
                u = u + du
                count += 1
            r_k = r
        U[k + 1] = u
        Vel[k + 1] = 2.0 * (u - uk) / dt - vk
        lam_out[k] = lam
        lam_prev = lam
        iters[k] = count
        if record_history:
            history.append(norms)
    return U, Vel, lam_out, iters, history


def _al_step(problem, S, uk, u, known, lam, V0, tol, k, norms):
    """Augmented-Lagrangian treatment of the constraint for one step."""
    mesh = problem.mesh
    rho = problem.al_rho
    total = 0
    for _ in range(100):
        count = 0
        while True:
            r, K = problem.force_and_tangent(u)
            cres = fem.volume(mesh, u) - V0
            R = S.matvec(u - uk) + r - known
            R[-1] += lam + rho * cres
            rnorm = float(np.abs(R).max())
            norms.append(rnorm)
            if rnorm <= tol:
                break
            if count >= problem.newton_max_iter or not np.isfinite(rnorm):
                raise NewtonDivergenceError(k, rnorm)
            J = (S + K).add_to_diag(-1, rho)
            try:
                u = u + J.solve(-R)
            except ZeroDivisionError:
                raise SingularSystemError("singular augmented system") from None
            count += 1
        total += count
        cres = fem.volume(mesh, u) - V0
        lam = lam + rho * cres
        if abs(cres) <= problem.al_tol:
            return u, lam, total
    raise NewtonDivergenceError(k, abs(cres))
