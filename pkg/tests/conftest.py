import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from elastocontrol import Mesh1D, ObjectiveConfig, Problem, StrainEnergyModel, TimeGrid

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_problem(T=15.0, dt=0.02, h=0.01, **kw):
    model = kw.pop("model", StrainEnergyModel.svk(0.05, 0.05))
    return Problem(Mesh1D.uniform(h), model, TimeGrid(T, dt), **kw)


def smooth_control(problem, amplitude=0.05, centre=5.0, width=3.0):
    """Space-uniform control pulse used as a non-trivial evaluation point."""
    g = problem.grid
    t = 0.5 * (g.times[:-1] + g.times[1:])
    shape = np.sin(np.pi * t / g.T) * np.exp(-((t - centre) / width) ** 2)
    return amplitude * shape[:, None] * np.ones((1, problem.mesh.n_control))


@pytest.fixture
def table1():
    return make_problem()


@pytest.fixture
def small():
    return make_problem(T=2.0, dt=0.02, h=0.05)


@pytest.fixture
def objective():
    return ObjectiveConfig()


# one line per acceptance criterion, echoed at the end of the session
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
