"""Backward implicit-Euler solution of the adjoint system with jumps.

Semi-discrete adjoint on the free nodes (``K = K(u(t))`` the tangent
stiffness, ``b`` the volume gradient)::

    M zeta0' = K zeta1 + c_u + pi b
    M zeta1' = -M zeta0 + kappa A zeta1 + c_v
    b . zeta1 = 0

integrated backward from ``M zeta(T) = -phi2'``.  A point evaluation
``phi1 = p(tau)`` of the boundary pressure produces the jump
``M [zeta]_tau = phi1'``, distributed over the two grid nodes around ``tau``
with linear interpolation weights.  Each step solves one bordered tridiagonal
system for ``(zeta1_k, pi_k)`` and one mass solve for ``zeta0_k``.

The scheme is the exact transpose of the implicit-Euler discretisation of the
linearised state equation; it is not the transpose of the Crank--Nicolson
forward scheme, so gradients carry a first-order time discretisation error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .fem import NonInjectiveError, Tridiag
from .forward import StateTrajectory, bordered_solve, boundary_gradients, boundary_stress
from .problem import Problem


@dataclass
class AdjointTrajectory:
    """Adjoint nodal fields at the grid times.

    ``zeta0[k]``, ``zeta1[k]`` hold the values produced by the backward step
    into ``t_k``, i.e. left limits where a jump sits at ``t_k``; the right
    limits are ``zeta + jump``.  ``pi[k]`` is the constraint multiplier of
    that step (zero at the final time).
    """

    times: np.ndarray
    zeta0: np.ndarray
    zeta1: np.ndarray
    pi: np.ndarray
    jump0: np.ndarray
    jump1: np.ndarray
    jump_nodes: list
    tau: float

    def right_limits(self):
        return self.zeta0 + self.jump0, self.zeta1 + self.jump1

    def interval_means(self):
        """Averages of the adjoint over each time interval (right limit at the start)."""
        r0, r1 = self.right_limits()
        return 0.5 * (r0[:-1] + self.zeta0[1:]), 0.5 * (r1[:-1] + self.zeta1[1:])


# ---------------------------------------------------------------------------
# pressure sensitivities

def pressure_sensitivity(problem: Problem, u, udot):
    """Covectors of ``dp/du`` and ``dp/dudot`` for the boundary pressure.

    With ``F = 1 + u'(1)`` the printed variational formulas read, in 1D,
    ``dp/du . w = -det(F)^-1 ((w' - (F^-T : w') F^T) kappa v' + F^T sigma_L w')``
    and ``dp/dudot . w = -det(F)^-1 F^T kappa w'``; the first bracket vanishes
    identically for scalars.
    """
    u = np.asarray(u, dtype=float)
    udot = np.asarray(udot, dtype=float)
    ug, vg = boundary_gradients(problem, u[None], udot[None])
    ug, vg = float(ug[0]), float(vg[0])
    F = 1.0 + ug
    if F <= 0:
        raise NonInjectiveError("non-injective deformation")
    _, K = boundary_stress(problem, ug)
    k_lin = float(K[0])  # sigma_L on the last element, per unit w'
    L = problem.mesh.lengths[-1]
    # w'(1) = (w_last - w_prev) / L as a covector
    dw = np.zeros(problem.mesh.n_free)
    dw[-1] = 1.0 / L
    if dw.size > 1:
        dw[-2] = -1.0 / L
    # (w' - (F^-T : w') F^T) = w' - (w'/F) F = 0 for scalars
    dpdu = -(F * k_lin * dw) / F
    dpdv = -(F * problem.kappa * dw) / F
    return dpdu, dpdv


# ---------------------------------------------------------------------------
# jumps

def jump_interpolation(tau, grid, data=None):
    """Split a point evaluation at ``tau`` between the neighbouring grid nodes.

    Returns a list of ``(node, weight)`` with weights ``(t_{i+1} - tau)/dt``
    and ``(tau - t_i)/dt``; if ``data`` (a callable ``node -> array``) is given
    the weighted arrays are returned instead of the weights.
    """
    times = grid.times
    if not (times[0] <= tau <= times[-1]):
        raise ValueError("tau outside the time grid")
    i = grid.interval_of(tau)
    t0, t1 = times[i], times[i + 1]
    w1 = (tau - t0) / (t1 - t0)
    if abs(w1) <= 1e-12:
        pairs = [(i, 1.0)]
    elif abs(1.0 - w1) <= 1e-12:
        pairs = [(i + 1, 1.0)]
    else:
        pairs = [(i, 1.0 - w1), (i + 1, w1)]
    if data is None:
        return pairs
    return [(node, w * np.asarray(data(node))) for node, w in pairs]


def constrained_mass_solve(problem: Problem, covector):
    """Field ``z`` with ``M z = covector - rho b`` and ``b . z = 0``."""
    if not problem.constrained:
        return problem.mass.solve(covector)
    z, _ = bordered_solve(problem.mass, problem.constraint_vector, covector, 0.0)
    return z


def _tangent_coefficients(problem: Problem, state: StateTrajectory):
    """Element tangent ``dP/du'`` at every grid time, shape ``(steps + 1, ne)``."""
    ne = problem.mesh.n_elements
    if problem.linearized:
        k0 = problem.stiffness0.diag[-1] * problem.mesh.lengths[-1]
        return np.full((state.times.size, ne), k0)
    full = np.concatenate([np.zeros((state.u.shape[0], 1)), state.u], axis=1)
    grads = np.diff(full, axis=1) / problem.mesh.lengths
    if problem.check_injectivity and np.any(1.0 + grads <= 0):
        raise NonInjectiveError("non-injective deformation")
    _, _, K = kernels.element_response(problem.model.code, problem.model.param_vector(),
                                       grads.ravel())
    return K.reshape(grads.shape)


def solve_adjoint(problem: Problem, state: StateTrajectory, tau, objective,
                  compiled=None, point_terms=None, sources=None, terminal=None) -> AdjointTrajectory:
    """Backward implicit Euler for the adjoint system.

    Parameters
    ----------
    problem : Problem
    state : StateTrajectory
    tau : float
        Switching time carrying the pressure evaluation.
    objective : ObjectiveConfig or None
        Supplies pressure evaluation times and weights, running-cost state
        derivatives and terminal derivatives.  Explicit ``point_terms``,
        ``sources`` and ``terminal`` override it.
    point_terms : list of (t, a), optional
        ``phi1 = sum a p(t)``.
    sources : tuple of (steps + 1, n) arrays, optional
        ``(c_u, c_v)`` covectors at the grid nodes.
    terminal : tuple of covectors, optional
        ``(phi2_u, phi2_v)``.
    """
    grid = problem.grid
    steps, n = grid.steps, problem.mesh.n_free
    if not (0.0 < tau < grid.T):
        raise ValueError("tau must lie in (0, T)")
    if point_terms is None:
        point_terms = objective.pressure_terms(tau, grid.dt) if objective is not None else []
    if sources is None and objective is not None:
        sources = objective.state_sources(problem, state)
    if terminal is None and objective is not None:
        terminal = objective.terminal_derivatives(problem, state)
    cu = np.zeros((steps + 1, n)) if sources is None else np.asarray(sources[0], dtype=float)
    cv = np.zeros((steps + 1, n)) if sources is None else np.asarray(sources[1], dtype=float)

    # jump covectors at nodes, then the fields they induce
    jcov0 = np.zeros((steps + 1, n))
    jcov1 = np.zeros((steps + 1, n))
    nodes = []
    for t_eval, a in point_terms:
        for node, w in jump_interpolation(t_eval, grid):
            du, dv = pressure_sensitivity(problem, state.u[node], state.v[node])
            jcov0[node] += a * w * du
            jcov1[node] += a * w * dv
            nodes.append((node, a * w))
    jump0 = np.zeros_like(jcov0)
    jump1 = np.zeros_like(jcov1)
    for node in sorted({nd for nd, _ in nodes}):
        jump0[node] = constrained_mass_solve(problem, jcov0[node])
        jump1[node] = constrained_mass_solve(problem, jcov1[node])

    z0_T = np.zeros(n)
    z1_T = np.zeros(n)
    if terminal is not None:
        z0_T = constrained_mass_solve(problem, -np.asarray(terminal[0], dtype=float))
        z1_T = constrained_mass_solve(problem, -np.asarray(terminal[1], dtype=float))
    # a jump sitting on the final node acts like terminal data
    z0_T = z0_T - jump0[steps]
    z1_T = z1_T - jump1[steps]

    Kc = _tangent_coefficients(problem, state)
    if compiled is None:
        compiled = kernels.USE_NUMBA
    if compiled:
        M, A = problem.mass, problem.damping
        Z0, Z1, pi, status, step = kernels.ie_adjoint(
            problem.mesh.lengths, M.upper, M.diag, A.upper, A.diag, grid.dt,
            np.ascontiguousarray(Kc), cu, cv, jump0, jump1, z0_T, z1_T, problem.constrained)
        if status != kernels.STATUS_OK:
            from .forward import SingularSystemError
            raise SingularSystemError(f"singular bordered adjoint system at step {step}")
    else:
        Z0, Z1, pi = _adjoint_python(problem, Kc, cu, cv, jump0, jump1, z0_T, z1_T)
    return AdjointTrajectory(grid.times, Z0, Z1, pi, jump0, jump1, nodes, float(tau))


def _adjoint_python(problem, Kc, cu, cv, jump0, jump1, z0_T, z1_T):
    grid = problem.grid
    dt, steps, n = grid.dt, grid.steps, problem.mesh.n_free
    M = problem.mass
    S0 = M.scaled(1.0 / dt**2) + problem.damping.scaled(1.0 / dt)
    b = problem.constraint_vector if problem.constrained else None
    Z0 = np.zeros((steps + 1, n))
    Z1 = np.zeros((steps + 1, n))
    pi = np.zeros(steps + 1)
    Z0[steps], Z1[steps] = z0_T, z1_T
    for k in range(steps - 1, -1, -1):
        z0n = Z0[k + 1] - jump0[k]
        z1n = Z1[k + 1] - jump1[k]
        lo, d, up = kernels.assemble_tridiag(problem.mesh.lengths, Kc[k])
        K = Tridiag(lo, d, up)
        rhs = M.matvec(z0n) / dt + M.matvec(z1n) / dt**2 - cv[k] / dt - cu[k]
        z1, p = bordered_solve(S0 + K, b, rhs, 0.0)
        src = K.matvec(z1) + cu[k]
        if b is not None:
            src = src + p * b
        Z1[k] = z1
        Z0[k] = z0n - dt * M.solve(src)
        pi[k] = p
    return Z0, Z1, pi


# ---------------------------------------------------------------------------
# the forward scheme the adjoint is the transpose of

def linearized_ie_forward(problem: Problem, state: StateTrajectory, g0, g1, g2,
                          z0_init=None, z1_init=None):
    """Implicit Euler for the state equation linearised about ``state``.

    Unknowns ``x_k`` approximate ``z(t_{k+1})`` for ``k = 0 .. steps - 1``::

        M (x0_k - x0_{k-1}) - dt M x1_k                            = g0_k
        (M + dt kappa A) x1_k - M x1_{k-1} + dt K(u_k) x0_k + b q_k = g1_k
        dt b . x0_k                                                 = g2_k

    with ``x_{-1}`` the initial data.  ``g0``, ``g1`` are covectors of shape
    ``(steps, n)`` (the time-step-weighted forcing), ``g2`` has shape
    ``(steps,)``.  Returns ``(X0, X1, Q)``.
    """
    grid = problem.grid
    dt, steps, n = grid.dt, grid.steps, problem.mesh.n_free
    M = problem.mass
    b = problem.constraint_vector if problem.constrained else None
    Kc = _tangent_coefficients(problem, state)
    S0 = M + problem.damping.scaled(dt)
    x0 = np.zeros(n) if z0_init is None else np.asarray(z0_init, dtype=float)
    x1 = np.zeros(n) if z1_init is None else np.asarray(z1_init, dtype=float)
    X0 = np.zeros((steps, n))
    X1 = np.zeros((steps, n))
    Q = np.zeros(steps)
    for k in range(steps):
        K = Tridiag(*kernels.assemble_tridiag(problem.mesh.lengths, Kc[k]))
        base = x0 + M.solve(g0[k])
        rhs = g1[k] + M.matvec(x1) - dt * K.matvec(base)
        c = 0.0 if b is None else (g2[k] / dt - b @ base) / dt
        x1, q = bordered_solve(S0 + K.scaled(dt**2), b, rhs, c)
        x0 = base + dt * x1
        X0[k], X1[k], Q[k] = x0, x1, q
    return X0, X1, Q


def duality_pairings(problem: Problem, state: StateTrajectory, rng, scale=1.0, compiled=None):
    """Both sides of the discrete transposition identity for random data.

    Random sources ``(c_u, c_v)``, terminal covectors and forcings
    ``(g0, g1, g2)`` plus initial data are drawn; the adjoint is solved with
    the sources and terminal data, the linearised forward scheme with the
    forcings.  Returns ``(objective_pairing, adjoint_pairing)``, which agree
    to rounding when the adjoint is the exact transpose.
    """
    grid = problem.grid
    dt, steps, n = grid.dt, grid.steps, problem.mesh.n_free
    cu = scale * rng.standard_normal((steps + 1, n))
    cv = scale * rng.standard_normal((steps + 1, n))
    term = (scale * rng.standard_normal(n), scale * rng.standard_normal(n))
    g0 = scale * dt * rng.standard_normal((steps, n))
    g1 = scale * dt * rng.standard_normal((steps, n))
    g2 = scale * dt * rng.standard_normal(steps) if problem.constrained else np.zeros(steps)
    z0i = scale * rng.standard_normal(n)
    z1i = scale * rng.standard_normal(n)
    if problem.constrained:
        z0i[-1] = 0.0
    adj = solve_adjoint(problem, state, 0.5 * grid.T, None, compiled=compiled, point_terms=[],
                        sources=(cu, cv), terminal=term)
    X0, X1, _ = linearized_ie_forward(problem, state, g0, g1, g2, z0i, z1i)
    M = problem.mass
    lhs = (-dt * np.sum(X0 * cu[:-1] + X1 * cv[:-1])
           + X0[-1] @ M.matvec(adj.zeta0[-1]) + X1[-1] @ M.matvec(adj.zeta1[-1]))
    G0 = g0.copy()
    G1 = g1.copy()
    G0[0] += M.matvec(z0i)
    G1[0] += M.matvec(z1i)
    rhs = np.sum(G0 * adj.zeta0[:-1] + G1 * adj.zeta1[:-1]) + g2 @ adj.pi[:-1]
    return float(lhs), float(rhs)
