"""Pointwise hyperelastic tensor algebra for d = 1, 2, 3.

Matrices are plain ``(d, d)`` numpy arrays.  Fourth-order tensors that act on
symmetric matrices are stored as ``(m, m)`` arrays in Mandel notation, with
``m = d(d+1)/2``: a symmetric matrix ``H`` maps to the vector holding its
diagonal followed by ``sqrt(2) * H[i, j]`` for ``i < j``.  With this basis the
Frobenius product ``A:B`` of symmetric matrices equals the Euclidean product of
their Mandel vectors, so the tangent of a hyperelastic law is a symmetric
``(m, m)`` matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)
# eigenvalues closer than this are treated as repeated in the Ogden tangent
_EIG_TOL = 1e-10


class SingularDeformationError(ValueError):
    pass


class InvalidOgdenStateError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Mandel helpers

def _offdiag_pairs(d):
    return [(i, j) for i in range(d) for j in range(i + 1, d)]


def to_mandel(H):
    """Mandel vector of a symmetric ``(d, d)`` matrix (the symmetric part is used)."""
    H = np.asarray(H, dtype=float)
    d = H.shape[0]
    sym = 0.5 * (H + H.T)
    vec = [sym[i, i] for i in range(d)]
    vec += [SQRT2 * sym[i, j] for i, j in _offdiag_pairs(d)]
    return np.array(vec)


def from_mandel(vec, d):
    vec = np.asarray(vec, dtype=float)
    H = np.zeros((d, d))
    for i in range(d):
        H[i, i] = vec[i]
    for k, (i, j) in enumerate(_offdiag_pairs(d)):
        H[i, j] = H[j, i] = vec[d + k] / SQRT2
    return H


def mandel_size(d):
    return d * (d + 1) // 2


def tangent_apply(tangent, H):
    """Apply a Mandel-stored 4-tensor to a symmetric matrix ``H``."""
    H = np.asarray(H, dtype=float)
    return from_mandel(tangent @ to_mandel(H), H.shape[0])


def symmetric_basis(d):
    """Orthonormal basis of symmetric matrices matching the Mandel ordering."""
    m = mandel_size(d)
    return [from_mandel(np.eye(m)[k], d) for k in range(m)]


# ---------------------------------------------------------------------------
# kinematics

def deformation_gradient(grad_u):
    grad_u = np.asarray(grad_u, dtype=float)
    return np.eye(grad_u.shape[0]) + grad_u


def green_strain(grad_u):
    """Green--Saint-Venant strain ``E = (F^T F - I) / 2`` with ``F = I + grad_u``."""
    F = deformation_gradient(grad_u)
    E = 0.5 * (F.T @ F - np.eye(F.shape[0]))
    return 0.5 * (E + E.T)


def strain_linearization(grad_u, grad_v):
    """Derivative of the Green strain at ``u`` in direction ``v``."""
    F = deformation_gradient(grad_u)
    grad_v = np.asarray(grad_v, dtype=float)
    return 0.5 * (F.T @ grad_v + grad_v.T @ F)


def det_cof(A):
    """Determinant and cofactor matrix, computed from minors (valid for singular A)."""
    A = np.asarray(A, dtype=float)
    d = A.shape[0]
    if d == 1:
        return float(A[0, 0]), np.ones((1, 1))
    if d == 2:
        cof = np.array([[A[1, 1], -A[1, 0]],
                        [-A[0, 1], A[0, 0]]])
        return float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]), cof
    if d == 3:
        # rows of the cofactor are cross products of the other two rows
        cof = np.empty((3, 3))
        cof[0] = np.cross(A[1], A[2])
        cof[1] = np.cross(A[2], A[0])
        cof[2] = np.cross(A[0], A[1])
        return float(A[0] @ cof[0]), cof
    raise ValueError(f"unsupported dimension {d}")


def cof_differential(A, H):
    """Directional derivative of ``cof`` at ``A`` in direction ``H``.

    Uses ``((cof A : H) cof A - cof A H^T cof A) / det A``.

    Raises
    ------
    SingularDeformationError
        If ``det A`` vanishes.
    """
    det, cof = det_cof(A)
    if abs(det) <= np.finfo(float).tiny or not np.isfinite(det):
        raise SingularDeformationError("singular deformation gradient")
    H = np.asarray(H, dtype=float)
    return (np.sum(cof * H) * cof - cof @ H.T @ cof) / det


# ---------------------------------------------------------------------------
# strain energies

@dataclass(frozen=True)
class StrainEnergyModel:
    """Hyperelastic law as a function of the Green strain.

    Parameters
    ----------
    kind : {'svk', 'fung', 'ogden'}
        Saint Venant--Kirchhoff, Fung (exponential) or Ogden (matrix power).
    params : dict
        ``svk``: ``lam`` (>= 0), ``mu`` (> 0);
        ``fung``: ``W0`` (>= 0), ``beta`` (> 0), ``gamma`` (> 0);
        ``ogden``: ``gamma`` (real exponent).
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        p = dict(self.params)
        if kind == "svk":
            p.setdefault("lam", 0.05)
            p.setdefault("mu", 0.05)
            if p["mu"] <= 0 or p["lam"] < 0:
                raise ValueError("svk requires mu > 0 and lam >= 0")
        elif kind == "fung":
            p.setdefault("W0", 0.0)
            p.setdefault("beta", 1.0)
            p.setdefault("gamma", 1.0)
            if p["beta"] <= 0 or p["gamma"] <= 0 or p["W0"] < 0:
                raise ValueError("fung requires beta > 0, gamma > 0, W0 >= 0")
        elif kind == "ogden":
            p.setdefault("gamma", 2.0)
        else:
            raise ValueError(f"unknown strain energy kind {self.kind!r}")
        object.__setattr__(self, "params", p)

    @classmethod
    def svk(cls, lam=0.05, mu=0.05):
        return cls("svk", {"lam": lam, "mu": mu})

    @classmethod
    def fung(cls, W0=0.0, beta=1.0, gamma=1.0):
        return cls("fung", {"W0": W0, "beta": beta, "gamma": gamma})

    @classmethod
    def ogden(cls, gamma=2.0):
        return cls("ogden", {"gamma": gamma})

    @property
    def code(self):
        """Integer tag used by the compiled kernels."""
        return {"svk": 0, "fung": 1, "ogden": 2}[self.kind]

    def param_vector(self):
        p = self.params
        if self.kind == "svk":
            return np.array([p["lam"], p["mu"], 0.0])
        if self.kind == "fung":
            return np.array([p["W0"], p["beta"], p["gamma"]])
        return np.array([p["gamma"], 0.0, 0.0])


def _ogden_eig(E):
    C = 2.0 * E + np.eye(E.shape[0])
    c, V = np.linalg.eigh(0.5 * (C + C.T))
    if np.any(c <= 0.0):
        raise InvalidOgdenStateError("invalid Ogden state: 2E+I is not positive definite")
    return c, V


def energy_and_derivatives(model: StrainEnergyModel, E):
    """Strain energy, its gradient and Hessian with respect to ``E``.

    Parameters
    ----------
    model : StrainEnergyModel
    E : (d, d) array
        Symmetric strain.

    Returns
    -------
    W : float
    Sigma : (d, d) array
        Second Piola--Kirchhoff stress ``dW/dE`` (symmetric).
    tangent : (m, m) array
        ``d2W/dE2`` in Mandel storage.
    """
    E = np.asarray(E, dtype=float)
    E = 0.5 * (E + E.T)
    d = E.shape[0]
    m = mandel_size(d)
    I = np.eye(d)
    p = model.params

    if model.kind == "svk":
        lam, mu = p["lam"], p["mu"]
        trE = np.trace(E)
        W = mu * np.sum(E * E) + 0.5 * lam * trE**2
        Sigma = 2.0 * mu * E + lam * trE * I
        iv = to_mandel(I)
        tangent = 2.0 * mu * np.eye(m) + lam * np.outer(iv, iv)
        return float(W), Sigma, tangent

    if model.kind == "fung":
        W0, beta, gamma = p["W0"], p["beta"], p["gamma"]
        q = np.sum(E * E)
        ex = np.exp(gamma * q)
        W = W0 + beta * (ex - 1.0)
        Sigma = 2.0 * gamma * beta * ex * E
        ev = to_mandel(E)
        tangent = beta * ex * (2.0 * gamma * np.eye(m) + 4.0 * gamma**2 * np.outer(ev, ev))
        return float(W), Sigma, tangent

    # Ogden: W = tr(C^g - I) with C = 2E + I, handled in the eigenbasis of C
    gamma = p["gamma"]
    c, V = _ogden_eig(E)
    W = float(np.sum(c**gamma - 1.0))
    Sigma = 2.0 * gamma * (V * c ** (gamma - 1.0)) @ V.T
    Sigma = 0.5 * (Sigma + Sigma.T)
    # Daleckii-Krein: d f(C)[K] = V (f1 o (V^T K V)) V^T, f(c) = c^(g-1), K = 2H
    f = c ** (gamma - 1.0)
    fprime = (gamma - 1.0) * c ** (gamma - 2.0)
    f1 = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            if abs(c[i] - c[j]) <= _EIG_TOL * max(1.0, abs(c[i])):
                # confluent limit of the divided difference
                f1[i, j] = 0.5 * (fprime[i] + fprime[j])
            else:
                f1[i, j] = (f[i] - f[j]) / (c[i] - c[j])
    tangent = np.empty((m, m))
    for k, B in enumerate(symmetric_basis(d)):
        dS = 4.0 * gamma * V @ (f1 * (V.T @ B @ V)) @ V.T
        tangent[:, k] = to_mandel(dS)
    tangent = 0.5 * (tangent + tangent.T)
    return W, Sigma, tangent


def strain_energy(model, grad_u):
    return energy_and_derivatives(model, green_strain(grad_u))[0]


def sigma(model, grad_u):
    """First Piola stress ``(I + grad u) Sigma(E(u))``."""
    _, S, _ = energy_and_derivatives(model, green_strain(grad_u))
    return deformation_gradient(grad_u) @ S


def sigma_L_apply(model, grad_u, grad_v):
    """Linearized stress ``grad v Sigma + (I + grad u) D2W[E'(u) v]``."""
    grad_v = np.asarray(grad_v, dtype=float)
    _, S, tangent = energy_and_derivatives(model, green_strain(grad_u))
    dE = strain_linearization(grad_u, grad_v)
    return grad_v @ S + deformation_gradient(grad_u) @ tangent_apply(tangent, dE)


def sigma_N_apply(grad_u, grad_v):
    """Cofactor linearization at ``I + grad u`` in direction ``grad v``."""
    return cof_differential(deformation_gradient(grad_u), grad_v)


def random_symmetric(rng, d, scale=0.1):
    A = rng.standard_normal((d, d)) * scale
    return 0.5 * (A + A.T)
