from types import SimpleNamespace

import numpy as np
import pytest
from conftest import make_problem, smooth_control

from elastocontrol import ObjectiveConfig, TimeGrid, fem
from elastocontrol.adjoint import solve_adjoint
from elastocontrol.forward import solve_forward
from elastocontrol.objective import (control_cost, evaluate, evaluate_J, evaluate_J_warped, fd_check,
                                     gradient, hamiltonian, hamiltonian_terms, pressure_functional)


@pytest.fixture(scope="module")
def driven():
    pb = make_problem(T=3.0, dt=0.02, h=0.05)
    xi = smooth_control(pb, 0.05, centre=1.0, width=0.6)
    return pb, xi, solve_forward(pb, xi)


def test_trivial_objective_is_zero(table1, objective):
    s = solve_forward(table1)
    assert evaluate_J(table1, s, None, 7.5, objective) == 0.0


def test_control_cost_of_unit_control(table1, objective):
    xi = np.ones((table1.grid.steps, table1.mesh.n_control))
    total = objective.alpha * table1.grid.dt * control_cost(table1, xi).sum()
    assert total == pytest.approx(-0.00375, rel=1e-12)


def test_objective_rejects_bad_tau(driven, objective):
    pb, xi, s = driven
    for tau in (0.0, 3.0, -1.0):
        with pytest.raises(ValueError):
            evaluate_J(pb, s, xi, tau, objective)
    with pytest.raises(ValueError):
        evaluate_J(pb, s, xi, 2.99, ObjectiveConfig(kind="pressure_difference_quotient", eps=0.05))
    with pytest.raises(ValueError):
        ObjectiveConfig(alpha=0.0)


def test_difference_quotient_of_constant_pressure():
    grid = TimeGrid(2.0, 0.1)
    state = SimpleNamespace(pressure=np.full(grid.steps + 1, 0.37))
    terms = ObjectiveConfig(kind="pressure_difference_quotient").pressure_terms(0.73, grid.dt)
    assert pressure_functional(state, grid, terms) == pytest.approx(0.0, abs=1e-13)
    state = SimpleNamespace(pressure=0.5 * grid.times)
    assert pressure_functional(state, grid, terms) == pytest.approx(0.5, rel=1e-12)


def test_pressure_point_value_interpolates(driven, objective):
    pb, xi, s = driven
    k = 40
    J0 = evaluate_J(pb, s, None, s.times[k], objective)
    assert J0 == s.pressure[k]
    J_mid = evaluate_J(pb, s, None, 0.5 * (s.times[k] + s.times[k + 1]), objective)
    assert J_mid == pytest.approx(0.5 * (s.pressure[k] + s.pressure[k + 1]), rel=1e-12)


@pytest.mark.parametrize("kind", ["pressure_at_tau", "pressure_difference_quotient"])
@pytest.mark.parametrize("tau", [1.0, 1.2345])
def test_warped_objective_matches(driven, kind, tau):
    pb, xi, s = driven
    obj = ObjectiveConfig(kind=kind, track_u=0.4, track_v=0.2, terminal_v=1.0)
    a = evaluate_J(pb, s, xi, tau, obj)
    b = evaluate_J_warped(pb, s, xi, tau, obj)
    assert abs(a - b) <= 1e-8


def test_hamiltonian_with_zero_adjoint(driven, objective):
    pb, xi, s = driven
    z = np.zeros(pb.mesh.n_free)
    u = s.u[30]
    terms = hamiltonian_terms(pb, u, s.v[30], pb.force(u), s.pressure[30], z, z, 0.3, xi[30],
                              s.times[30], objective)
    c = -0.5 * objective.alpha * xi[30] @ pb.control_mass @ xi[30]
    assert sum(terms.values()) == pytest.approx(c + 0.3 * fem.volume(pb.mesh, u), rel=1e-14)
    zero = hamiltonian_terms(pb, z, z, z, 0.0, z, z, 0.0, None, 0.0, objective)
    assert sum(zero.values()) == 0.0


def test_stress_term_is_energy_derivative(driven, objective):
    pb, _, s = driven
    u = s.u[50]
    zeta1 = np.sin(3 * pb.mesh.free_coordinates())
    z = np.zeros_like(u)
    term = hamiltonian_terms(pb, u, z, pb.force(u), 0.0, z, zeta1, 0.0, None, 0.0, objective)["stress"]

    def dq(h):
        return (pb.energy(u + h * zeta1) - pb.energy(u - h * zeta1)) / (2 * h)

    # Richardson extrapolation removes the h^2 term of the central difference
    fd = (4 * dq(5e-4) - dq(1e-3)) / 3
    assert term == pytest.approx(fd, rel=1e-10)


def test_constraint_term_vanishes_on_adjoint(driven, objective):
    pb, xi, s = driven
    adj = solve_adjoint(pb, s, 1.5, objective)
    z0, z1 = adj.interval_means()
    b = pb.constraint_vector
    worst = max(abs(s.pressure[k] * (z1[k] @ b)) for k in range(pb.grid.steps))
    assert worst <= 1e-12
    assert np.isfinite(hamiltonian(pb, s, adj, xi, objective, 20))


def test_gradient_vanishes_for_zero_data(table1, objective):
    s = solve_forward(table1)
    adj = solve_adjoint(table1, s, 7.5, None, point_terms=[])
    g = gradient(table1, s, adj, None, 7.5, objective)
    assert np.abs(g.xi).max() == 0.0 and g.tau == 0.0


def test_xi_gradient_formula(driven, objective):
    pb, xi, s = driven
    ev = evaluate(pb, xi, 1.5, objective)
    _, z1 = ev.adjoint.interval_means()
    Bz = z1 @ pb.control_matrix
    expected = -objective.alpha * xi - np.linalg.solve(pb.control_mass, Bz.T).T
    assert np.allclose(ev.grad.xi, expected, rtol=1e-12, atol=1e-15)
    d = np.cos(np.arange(xi.size)).reshape(xi.shape)
    riesz = pb.grid.dt * np.einsum("ki,ij,kj->", ev.grad.xi, pb.control_mass, d)
    assert ev.grad.pair(d) == pytest.approx(riesz, rel=1e-10)


def test_fd_zero_direction(driven, objective):
    pb, xi, _ = driven
    rep, _ = fd_check(pb, xi, 1.5, objective, directions=[np.zeros_like(xi)], h_schedule=(1e-3,),
                      tau_steps=())
    (row,) = rep.rows
    assert row.fd == 0.0 and row.predicted == 0.0


def test_fd_error_halves_with_time_step(objective):
    errs = {}
    for dt in (0.01, 0.005):
        pb = make_problem(T=2.0, dt=dt, h=0.05)
        xi = smooth_control(pb, 0.05, centre=0.8, width=0.5)
        rep, _ = fd_check(pb, xi, 1.0, objective, n_directions=3, h_schedule=(1e-3, 1e-4, 1e-5))
        errs[dt] = (rep.best("xi"), rep.best("tau"))
    for c in range(2):
        assert errs[0.005][c] / errs[0.01][c] == pytest.approx(0.5, abs=0.1)


def test_fd_fine_step_small_data(objective):
    pb = make_problem(T=2.0, dt=0.002, h=0.05)
    xi = smooth_control(pb, 0.05, centre=0.8, width=0.5)
    rep, _ = fd_check(pb, xi, 1.0, objective, n_directions=3, h_schedule=(1e-3, 1e-4, 1e-5))
    assert rep.best() <= 1e-2
