"""Hybrid optimal control of a damped, volume-constrained nonlinear elastic bar.

Forward Crank--Nicolson finite element solver, discrete adjoint with
switching-time jumps, the (control, switching time) gradient and a
Barzilai--Borwein ascent loop.
"""
from .adjoint import AdjointTrajectory, solve_adjoint
from .config import RunConfig
from .fem import Mesh1D, NonInjectiveError
from .forward import NewtonDivergenceError, SingularSystemError, StateTrajectory, solve_forward
from .kernels import BACKEND
from .objective import ObjectiveConfig, evaluate, evaluate_J, fd_check, gradient
from .optimizer import OptimizerConfig, PDEEvaluator, optimize
from .problem import Problem, TimeGrid
from .tensor_calculus import StrainEnergyModel

__version__ = "0.1.0"

__all__ = [
    "AdjointTrajectory", "BACKEND", "Mesh1D", "NewtonDivergenceError", "NonInjectiveError",
    "ObjectiveConfig", "OptimizerConfig", "PDEEvaluator", "Problem", "RunConfig",
    "SingularSystemError", "StateTrajectory", "StrainEnergyModel", "TimeGrid", "evaluate",
    "evaluate_J", "fd_check", "gradient", "optimize", "solve_adjoint", "solve_forward",
]
