"""Fast invariant checks runnable from an installed package (``elastocontrol selftest``)."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import fem, time_warp
from .adjoint import duality_pairings
from .forward import solve_forward
from .problem import Problem, TimeGrid
from .tensor_calculus import (StrainEnergyModel, energy_and_derivatives, random_symmetric,
                              sigma_L_apply, tangent_apply)

LAWS = {
    "svk": StrainEnergyModel.svk(0.05, 0.05),
    "fung": StrainEnergyModel.fung(0.0, 1.0, 1.0),
    "ogden": StrainEnergyModel.ogden(2.5),
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag}  {self.name}: {self.value:.3e} (tol {self.tolerance:.1e}, {self.seconds:.2f}s)"


def constitutive_errors(model, rng, samples=100, d=3, h=1e-6, scale=0.1):
    """Worst relative central-difference errors of ``W -> Sigma`` and ``Sigma -> tangent``."""
    worst_s = worst_t = 0.0
    for _ in range(samples):
        E = random_symmetric(rng, d, scale)
        H = random_symmetric(rng, d, 1.0)
        _, S, C = energy_and_derivatives(model, E)
        Wp, Sp, _ = energy_and_derivatives(model, E + h * H)
        Wm, Sm, _ = energy_and_derivatives(model, E - h * H)
        dW = (Wp - Wm) / (2 * h)
        exact = float(np.sum(S * H))
        worst_s = max(worst_s, abs(dW - exact) / max(abs(exact), 1e-300))
        dS = (Sp - Sm) / (2 * h)
        exact_t = tangent_apply(C, H)
        worst_t = max(worst_t, np.linalg.norm(dS - exact_t) / max(np.linalg.norm(exact_t), 1e-300))
    return worst_s, worst_t


def linearized_stress_asymmetry(model, rng, samples=100, d=3, scale=0.1):
    """Worst relative asymmetry of ``(v, w) -> <sigma_L(u)[v], grad w>``."""
    worst = 0.0
    for _ in range(samples):
        G = rng.standard_normal((d, d)) * scale
        V = rng.standard_normal((d, d))
        W = rng.standard_normal((d, d))
        a = float(np.sum(sigma_L_apply(model, G, V) * W))
        b = float(np.sum(sigma_L_apply(model, G, W) * V))
        worst = max(worst, abs(a - b) / max(abs(a), abs(b), 1e-300))
    return worst


def _small_problem(T=2.0, dt=0.02, h=0.05):
    return Problem(fem.Mesh1D.uniform(h), StrainEnergyModel.svk(0.05, 0.05), TimeGrid(T, dt))


def _timed(name, tol, fn):
    t0 = time.perf_counter()
    value = float(fn())
    return CheckResult(name, bool(value <= tol), value, tol, time.perf_counter() - t0)


def run(seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for name, model in LAWS.items():
        errs = {}

        def both(model=model, errs=errs):
            errs["s"], errs["t"] = constitutive_errors(model, rng)
            return errs["s"]

        out.append(_timed(f"{name}: energy -> stress", 1e-6, both))
        out.append(CheckResult(f"{name}: stress -> tangent", errs["t"] <= 1e-6, errs["t"], 1e-6))
        out.append(_timed(f"{name}: linearized stress symmetry", 1e-12,
                          lambda model=model: linearized_stress_asymmetry(model, rng)))

    pb = _small_problem()
    out.append(_timed("trivial state with zero control", 0.0,
                      lambda: np.abs(solve_forward(pb).u).max()))
    steps, m = pb.grid.steps, pb.mesh.n_control
    t = 0.5 * (pb.grid.times[:-1] + pb.grid.times[1:])
    xi = 0.05 * np.sin(np.pi * t / pb.grid.T)[:, None] * np.ones((steps, m))
    state = solve_forward(pb, xi)
    out.append(CheckResult("volume conservation", bool(np.abs(state.volume_residual).max() <= 1e-10),
                           float(np.abs(state.volume_residual).max()), 1e-10))

    def transposition():
        worst = 0.0
        for _ in range(3):
            lhs, rhs = duality_pairings(pb, state, rng)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
        return worst

    out.append(_timed("discrete transposition identity", 1e-8, transposition))

    def warp():
        p = time_warp.WarpParams(15.0, 7.5, 0.02, 2 * 0.02 / 15.0)
        vals = time_warp.mu(np.array([0.0, 1.0, 1.0 + p.eps_ref, 2.0]), p)
        return float(np.abs(vals - p.breakpoints_t).max())

    out.append(_timed("time warp pinned values", 0.0, warp))
    return out
