"""Problem data shared by the forward and adjoint solvers."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import fem
from .tensor_calculus import StrainEnergyModel


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k dt`` on ``[0, T]``."""

    T: float = 15.0
    dt: float = 0.02

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("T and dt must be positive")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"dt={self.dt} does not divide T={self.T}")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.steps + 1)

    def interval_of(self, t):
        """Index ``i`` with ``t_i <= t <= t_{i+1}`` (last interval for ``t = T``)."""
        i = int(np.floor(t / self.dt + 1e-12))
        return min(max(i, 0), self.steps - 1)


def profile(name: str, mesh: fem.Mesh1D, amplitude=0.0, coeffs=()):
    """Named analytic initial profile evaluated at the free nodes.

    ``zero``; ``sine``: ``amplitude * sin(pi x)`` (vanishes at both ends);
    ``poly``: ``sum_k coeffs[k] * x**(k+1)`` (vanishes at ``x = 0``).
    """
    x = mesh.free_coordinates()
    if name == "zero":
        return np.zeros_like(x)
    if name == "sine":
        return amplitude * np.sin(np.pi * x)
    if name == "poly":
        return sum(c * x ** (k + 1) for k, c in enumerate(coeffs)) + 0.0 * x
    raise ValueError(f"unknown profile {name!r}")


@dataclass
class Problem:
    """Everything the state equation needs besides the control.

    Parameters
    ----------
    constraint : {'bordered', 'augmented_lagrangian', 'none'}
        How the volume constraint is imposed.  ``none`` drops it and leaves a
        homogeneous Neumann end (used by convergence studies).
    linearized : bool
        Replace the internal force by its tangent at ``u = 0``.
    check_injectivity : bool
        Abort the forward solve when an element reaches ``1 + u' <= 0``.  Off
        by default; the trajectory records the smallest Jacobian instead.
    surface_load : callable or float
        Scalar traction ``g(t)`` at ``x = 1``.
    """

    mesh: fem.Mesh1D
    model: StrainEnergyModel
    grid: TimeGrid
    kappa: float = 2e-4
    control_kind: str = "plain"
    surface_load: Callable | float = 0.0
    u0: np.ndarray | None = None
    v0: np.ndarray | None = None
    constraint: str = "bordered"
    linearized: bool = False
    check_injectivity: bool = False
    newton_tol: float = 1e-10
    newton_max_iter: int = 25
    al_rho: float = 1e4
    al_tol: float = 1e-12
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.constraint not in ("bordered", "augmented_lagrangian", "none"):
            raise ValueError(f"unknown constraint mode {self.constraint!r}")
        n = self.mesh.n_free
        self.u0 = np.zeros(n) if self.u0 is None else np.asarray(self.u0, dtype=float)
        self.v0 = np.zeros(n) if self.v0 is None else np.asarray(self.v0, dtype=float)
        if self.u0.shape != (n,) or self.v0.shape != (n,):
            raise ValueError("initial data must have one value per free node")

    @cached_property
    def mass(self):
        return fem.assemble_mass(self.mesh)

    @cached_property
    def damping(self):
        return fem.assemble_damping(self.mesh, self.kappa)

    @cached_property
    def stiffness0(self):
        return fem.tangent_stiffness(self.mesh, self.model, np.zeros(self.mesh.n_free))

    @cached_property
    def control_matrix(self):
        return fem.control_operator(self.mesh, self.control_kind)

    @cached_property
    def control_mass(self):
        return fem.control_mass(self.mesh)

    @cached_property
    def constraint_vector(self):
        return fem.constraint_vector(self.mesh)

    @property
    def constrained(self):
        return self.constraint != "none"

    def g(self, t):
        return float(self.surface_load(t)) if callable(self.surface_load) else float(self.surface_load)

    def force_and_tangent(self, u):
        if self.linearized:
            K = self.stiffness0
            return K.matvec(u), K
        return fem.force_and_tangent(self.mesh, self.model, u, self.check_injectivity)

    def force(self, u):
        if self.linearized:
            return self.stiffness0.matvec(u)
        return fem.internal_force(self.mesh, self.model, u, self.check_injectivity)

    def tangent(self, u):
        if self.linearized:
            return self.stiffness0
        return fem.tangent_stiffness(self.mesh, self.model, u, self.check_injectivity)

    def energy(self, u):
        if self.linearized:
            return 0.5 * float(u @ self.stiffness0.matvec(u))
        return fem.total_energy(self.mesh, self.model, u, self.check_injectivity)

    def with_grid(self, grid):
        out = Problem(**{f: getattr(self, f) for f in self.__dataclass_fields__})
        out.grid = grid
        return out
