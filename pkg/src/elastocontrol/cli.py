"""Command line front end.

    elastocontrol <forward|adjoint|gradcheck|optimize|selftest> [--config FILE]
        [--set key=value ...] [--out DIR] [--dt DT] [--mesh-h H] [--seedless]

Exit status: 0 on success, 1 for failed self-test or determinism checks,
2 for an invalid configuration, 3 for a solver failure.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys

import numpy as np

from . import config as cfgmod
from . import output, selftest
from .adjoint import solve_adjoint
from .fem import NonInjectiveError
from .forward import NewtonDivergenceError, SingularSystemError, solve_forward
from .objective import evaluate_J, fd_check
from .optimizer import PDEEvaluator, optimize
from .tensor_calculus import InvalidOgdenStateError

log = logging.getLogger("elastocontrol")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
SOLVER_FAILURES = (NewtonDivergenceError, SingularSystemError, NonInjectiveError,
                   InvalidOgdenStateError)


def build_parser():
    ap = argparse.ArgumentParser(prog="elastocontrol", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=("forward", "adjoint", "gradcheck", "optimize", "selftest"))
    ap.add_argument("--config", help="INI run configuration")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a configuration entry (repeatable)")
    ap.add_argument("--out", help="output directory (overrides out_dir)")
    ap.add_argument("--dt", type=float, help="time step (overrides dt)")
    ap.add_argument("--mesh-h", type=float, help="mesh size (overrides mesh_h)")
    ap.add_argument("--control", default="zero",
                    help="'zero', 'bump' or a .npy file of shape (steps, control nodes)")
    ap.add_argument("--seedless", action="store_true",
                    help="run twice and require bitwise identical results")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def resolve_config(args):
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    extra = list(args.set)
    if args.out is not None:
        extra.append(f"out_dir={args.out}")
    if args.dt is not None:
        extra.append(f"dt={args.dt!r}")
    if args.mesh_h is not None:
        extra.append(f"mesh_h={args.mesh_h!r}")
    return cfgmod.apply_overrides(cfg, extra).validate()


def bump_control(problem, amplitude=0.05):
    """Smooth sample control peaking mid-interval, for checks away from the trivial state."""
    g = problem.grid
    t = 0.5 * (g.times[:-1] + g.times[1:])
    shape = np.sin(np.pi * t / g.T) * np.exp(-((t - g.T / 3) / (g.T / 5)) ** 2)
    return amplitude * shape[:, None] * np.ones((1, problem.mesh.n_control))


def load_control(spec, problem):
    shape = (problem.grid.steps, problem.mesh.n_control)
    if spec == "zero":
        return np.zeros(shape)
    if spec == "bump":
        return bump_control(problem)
    xi = np.load(spec)
    if xi.shape != shape:
        raise cfgmod.ConfigError([("control", f"expected shape {shape}, got {xi.shape}")])
    return xi


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()


def cmd_forward(cfg, problem, xi, out):
    state = solve_forward(problem, xi)
    sep = cfg.separator
    output.write_state(os.path.join(out, "state.csv"), problem, state, sep)
    output.write_pressure(os.path.join(out, "pressure.csv"), state, sep)
    output.write_multiplier(os.path.join(out, "multiplier.csv"), state, sep)
    print(f"steps={problem.grid.steps} max|u|={np.abs(state.u).max():.6e} "
          f"max|volume residual|={np.abs(state.volume_residual).max():.3e}")
    return _digest(state.u, state.v, state.pressure)


def cmd_adjoint(cfg, problem, xi, out):
    obj = cfg.objective_config()
    state = solve_forward(problem, xi)
    adj = solve_adjoint(problem, state, cfg.tau_eval, obj)
    output.write_adjoint(os.path.join(out, "adjoint.csv"), problem, adj, cfg.separator)
    print(f"tau={cfg.tau_eval} J={evaluate_J(problem, state, xi, cfg.tau_eval, obj):.12e}")
    return _digest(adj.zeta0, adj.zeta1, adj.pi)


def cmd_gradcheck(cfg, problem, xi, out):
    report, _ = fd_check(problem, xi, cfg.tau_eval, cfg.objective_config())
    output.write_fd_report(os.path.join(out, "gradcheck.csv"), report, cfg.separator)
    print(f"best relative error: xi {report.best('xi'):.3e}, tau {report.best('tau'):.3e}")
    return _digest([r.fd for r in report.rows], [r.predicted for r in report.rows])


def cmd_optimize(cfg, problem, xi, out):
    ev = PDEEvaluator(problem, cfg.objective_config())
    rep = optimize(ev, cfg.optimizer_config(), xi0=xi, tau0=cfg.tau0)
    sep = cfg.separator
    output.write_iterations(os.path.join(out, "iterations.csv"), rep, sep)
    state = rep.final.extra
    output.write_pressure(os.path.join(out, "pressure.csv"), state, sep)
    output.write_snapshots(out, problem, state, rep.xi, sep=sep)
    np.save(os.path.join(out, "control.npy"), rep.xi)
    output.write_summary(os.path.join(out, "summary.csv"), [
        ("J", rep.J), ("tau", rep.tau), ("grad_norm", rep.grad_norm),
        ("grad_norm_xi", rep.grad_norm_xi), ("grad_tau", rep.grad_tau),
        ("J_initial", rep.J_initial), ("iterations", len(rep.iterations) - 1),
        ("evaluations", rep.evaluations), ("converged", rep.converged), ("reason", rep.reason)], sep)
    print(f"{rep.reason}: J*={rep.J:.12e} tau*={rep.tau:.6f} |G|={rep.grad_norm:.3e} "
          f"iterations={len(rep.iterations) - 1}")
    return _digest(rep.xi, [rep.tau, rep.J])


COMMANDS = {"forward": cmd_forward, "adjoint": cmd_adjoint, "gradcheck": cmd_gradcheck,
            "optimize": cmd_optimize}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "selftest":
        results = selftest.run()
        for r in results:
            print(r.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED
    try:
        cfg = resolve_config(args)
        problem = cfg.problem()
        xi = load_control(args.control, problem)
    except cfgmod.ConfigError as exc:
        for key, msg in exc.errors:
            print(f"config error: {key}: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.ini"), "w", encoding="utf-8") as fh:
        fh.write(cfgmod.serialize(cfg))
    try:
        digest = COMMANDS[args.command](cfg, problem, xi, out)
        if args.seedless and COMMANDS[args.command](cfg, problem, xi, out) != digest:
            print("determinism check failed: repeated run differs", file=sys.stderr)
            return EXIT_FAILED
    except SOLVER_FAILURES as exc:
        step = getattr(exc, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"solver failure{where}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
