"""P1 finite elements on the unit interval.

The displacement vanishes at ``x = 0``; that node is eliminated, so nodal
fields have one entry per remaining node and the last entry sits at ``x = 1``.
Element integrands are evaluated with 2-point Gauss quadrature; for P1 fields
the displacement gradient is constant per element, so the quadrature is exact
for every law.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor_calculus import StrainEnergyModel, det_cof, energy_and_derivatives, green_strain

GAUSS_POINTS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
GAUSS_WEIGHTS = np.array([1.0, 1.0])


class NonInjectiveError(ValueError):
    pass


@dataclass
class Tridiag:
    """Symmetric-pattern tridiagonal matrix stored by its three diagonals."""

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    @property
    def n(self):
        return self.diag.shape[0]

    def matvec(self, x):
        # x may carry trailing batch axes
        x = np.asarray(x, dtype=float)
        shape = (-1,) + (1,) * (x.ndim - 1)
        y = self.diag.reshape(shape) * x
        y[:-1] += self.upper.reshape(shape) * x[1:]
        y[1:] += self.lower.reshape(shape) * x[:-1]
        return y

    def rmatvec(self, x):
        return self.transpose().matvec(x)

    def transpose(self):
        return Tridiag(self.upper.copy(), self.diag.copy(), self.lower.copy())

    def todense(self):
        A = np.diag(self.diag)
        A += np.diag(self.upper, 1) + np.diag(self.lower, -1)
        return A

    def solve(self, rhs):
        return kernels.solve_tridiag(self.lower, self.diag, self.upper, rhs)

    def scaled(self, a):
        return Tridiag(a * self.lower, a * self.diag, a * self.upper)

    def __add__(self, other):
        return Tridiag(self.lower + other.lower, self.diag + other.diag, self.upper + other.upper)

    def add_to_diag(self, idx, value):
        d = self.diag.copy()
        d[idx] += value
        return Tridiag(self.lower.copy(), d, self.upper.copy())


@dataclass
class Mesh1D:
    """Sorted nodes on [0, 1] with the control window ``omega``.

    Attributes
    ----------
    nodes : ndarray
        All node coordinates, ``nodes[0] = 0`` and ``nodes[-1] = 1``.
    control_window : tuple
        Closed interval carrying the distributed control.
    """

    nodes: np.ndarray
    control_window: tuple = (0.75, 1.0)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        x = self.nodes
        if x.ndim != 1 or x.size < 2:
            raise ValueError("mesh needs at least two nodes")
        if x[0] != 0.0 or x[-1] != 1.0:
            raise ValueError("mesh must span [0, 1]")
        if np.any(np.diff(x) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        a, b = map(float, self.control_window)
        if not (0.0 <= a < b <= 1.0):
            raise ValueError("control window must be a subinterval of [0, 1]")
        self.control_window = (a, b)
        self.lengths = np.diff(x)
        tol = 1e-12
        self.omega_nodes = np.flatnonzero((x >= a - tol) & (x <= b + tol))
        mids = 0.5 * (x[:-1] + x[1:])
        self.omega_elements = np.flatnonzero((mids > a) & (mids < b))

    @classmethod
    def uniform(cls, h=0.01, control_window=(0.75, 1.0)):
        n = int(round(1.0 / h))
        if n < 1 or abs(n * h - 1.0) > 1e-9:
            raise ValueError(f"mesh size {h} does not divide the unit interval")
        return cls(np.linspace(0.0, 1.0, n + 1), control_window)

    @property
    def h(self):
        return float(self.lengths.max())

    @property
    def n_free(self):
        return self.nodes.size - 1

    @property
    def n_elements(self):
        return self.lengths.size

    dirichlet_node = 0

    @property
    def neumann_node(self):
        return self.nodes.size - 1

    normal_at_neumann = 1.0

    @property
    def n_control(self):
        return self.omega_nodes.size

    def free_coordinates(self):
        return self.nodes[1:]

    def full(self, field):
        """Nodal field with the eliminated Dirichlet value prepended."""
        return np.concatenate(([0.0], np.asarray(field, dtype=float)))

    def element_gradients(self, field):
        return np.diff(self.full(field)) / self.lengths


# ---------------------------------------------------------------------------
# linear forms

def assemble_mass(mesh: Mesh1D) -> Tridiag:
    """Consistent P1 mass matrix on the free nodes."""
    L = mesh.lengths
    diag = L / 3.0
    diag[:-1] += L[1:] / 3.0
    off = L[1:] / 6.0
    return Tridiag(off.copy(), diag, off)


def assemble_stiffness(mesh: Mesh1D, coef=1.0) -> Tridiag:
    c = np.broadcast_to(np.asarray(coef, dtype=float), mesh.lengths.shape)
    lower, diag, upper = kernels.assemble_tridiag(mesh.lengths, np.ascontiguousarray(c))
    return Tridiag(lower, diag, upper)


def assemble_damping(mesh: Mesh1D, kappa: float) -> Tridiag:
    """``kappa`` times the P1 Laplacian stiffness."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    return assemble_stiffness(mesh, kappa)


def full_mass_dense(mesh: Mesh1D):
    """Mass matrix over all nodes, Dirichlet node included (used by checks)."""
    n = mesh.nodes.size
    M = np.zeros((n, n))
    for e, L in enumerate(mesh.lengths):
        M[e:e + 2, e:e + 2] += L / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    return M


# ---------------------------------------------------------------------------
# nonlinear forms

def check_injective(grads):
    if np.any(1.0 + grads <= 0.0):
        raise NonInjectiveError("non-injective deformation")


def element_response(mesh, model: StrainEnergyModel, u, strict=True):
    """Energy density, stress and stress derivative per element.

    ``strict`` rejects elements with ``1 + u' <= 0``; the energies themselves
    stay defined there, so callers may opt out.
    """
    g = mesh.element_gradients(u)
    if strict:
        check_injective(g)
    return kernels.element_response(model.code, model.param_vector(), g)


def internal_force(mesh, model, u, strict=True):
    """Residual ``r_i = int Sigma(E(u)) : E'(u) phi_i dx``."""
    _, P, _ = element_response(mesh, model, u, strict)
    return kernels.scatter_force(P, mesh.n_free)


def tangent_stiffness(mesh, model, u, strict=True) -> Tridiag:
    """Jacobian of :func:`internal_force`."""
    _, _, K = element_response(mesh, model, u, strict)
    lower, diag, upper = kernels.assemble_tridiag(mesh.lengths, K)
    return Tridiag(lower, diag, upper)


def force_and_tangent(mesh, model, u, strict=True):
    _, P, K = element_response(mesh, model, u, strict)
    r = kernels.scatter_force(P, mesh.n_free)
    lower, diag, upper = kernels.assemble_tridiag(mesh.lengths, K)
    return r, Tridiag(lower, diag, upper)


def total_energy(mesh, model, u, strict=True):
    """``int W(E(u)) dx``."""
    W, _, _ = element_response(mesh, model, u, strict)
    return float(np.sum(W * mesh.lengths))


def internal_force_reference(mesh, model, u):
    """Quadrature loop through the general tensor routines (slow oracle path)."""
    g = mesh.element_gradients(u)
    r_full = np.zeros(mesh.nodes.size)
    for e, L in enumerate(mesh.lengths):
        dphi = np.array([-1.0, 1.0]) / L
        for xq, wq in zip(GAUSS_POINTS, GAUSS_WEIGHTS):
            G = np.array([[g[e]]])
            _, S, _ = energy_and_derivatives(model, green_strain(G))
            for a in range(2):
                dE = 0.5 * ((1.0 + G) * dphi[a] + dphi[a] * (1.0 + G))
                r_full[e + a] += 0.5 * L * wq * float(np.sum(S * dE))
    return r_full[1:]


# ---------------------------------------------------------------------------
# volume constraint

def volume_and_gradient(mesh, u):
    """Deformed volume ``int det(I + u') dx`` and its nodal gradient.

    In 1D ``V(u) = 1 + u(1)`` and the gradient is the unit vector of the node
    at ``x = 1``; both are nevertheless computed by quadrature so that the
    boundary identity can be tested.
    """
    g = mesh.element_gradients(u)
    V = 0.0
    grad = np.zeros(mesh.nodes.size)
    for e, L in enumerate(mesh.lengths):
        det, cof = det_cof(np.array([[1.0 + g[e]]]))
        V += L * det
        # int cof : phi' over the element, for its two shape functions
        grad[e] += -cof[0, 0]
        grad[e + 1] += cof[0, 0]
    return float(V), grad[1:]


def volume(mesh, u):
    return 1.0 + float(np.asarray(u)[-1])


def constraint_vector(mesh):
    """Volume gradient in 1D: the unit vector of the ``x = 1`` node."""
    b = np.zeros(mesh.n_free)
    b[-1] = 1.0
    return b


# ---------------------------------------------------------------------------
# control

def control_mass(mesh: Mesh1D):
    """Mass matrix of P1 fields restricted to the control window nodes."""
    idx = {n: k for k, n in enumerate(mesh.omega_nodes)}
    m = mesh.n_control
    Mw = np.zeros((m, m))
    for e in mesh.omega_elements:
        L = mesh.lengths[e]
        a, b = idx[e], idx[e + 1]
        Mw[np.ix_([a, b], [a, b])] += L / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    return Mw


def control_operator(mesh: Mesh1D, kind="plain"):
    """Matrix mapping nodal controls on omega to load covectors on free nodes.

    ``plain``: ``int_omega xi phi_i``; ``fiber``: ``int_omega xi phi_i'``.
    """
    idx = {n: k for k, n in enumerate(mesh.omega_nodes)}
    B = np.zeros((mesh.nodes.size, mesh.n_control))
    for e in mesh.omega_elements:
        L = mesh.lengths[e]
        cols = [idx[e], idx[e + 1]]
        if kind == "plain":
            B[np.ix_([e, e + 1], cols)] += L / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        elif kind == "fiber":
            # int phi_j * phi_i' = phi_i' * L / 2 for each control hat j
            dphi = np.array([-1.0, 1.0]) / L
            B[np.ix_([e, e + 1], cols)] += np.outer(dphi, [0.5 * L, 0.5 * L])
        else:
            raise ValueError(f"unknown control operator {kind!r}")
    return B[1:]


def control_load(mesh, xi, kind="plain"):
    return control_operator(mesh, kind) @ np.asarray(xi, dtype=float)
