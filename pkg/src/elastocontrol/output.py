"""Delimiter-separated writers for trajectories, reports and snapshots.

Every file has one header row and full-precision decimals (``%.17g``).
Column order is part of the public interface; see the README.
"""
from __future__ import annotations

import os

import numpy as np

FMT = "%.17g"

# default snapshot instants for the reference experiment
SNAPSHOT_TIMES = (0.02,) + tuple(np.round(np.arange(1.0, 7.01, 0.5), 10)) + (7.46, 7.48)


def write_table(path, headers, columns, sep=","):
    """Write equally long columns under ``headers``."""
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    if len({c.size for c in cols}) > 1:
        raise ValueError("columns differ in length")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    np.savetxt(path, np.column_stack(cols) if cols else np.empty((0, 0)), fmt=FMT,
               delimiter=sep, header=sep.join(headers), comments="")
    return path


def write_records(path, headers, rows, sep=","):
    """Write rows of mixed strings and numbers."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(sep.join(headers) + "\n")
        for row in rows:
            fh.write(sep.join(v if isinstance(v, str) else FMT % v for v in row) + "\n")
    return path


def read_table(path, sep=","):
    """``(headers, data)`` of a file written by :func:`write_table`."""
    with open(path, encoding="utf-8") as fh:
        headers = fh.readline().rstrip("\n").split(sep)
    data = np.loadtxt(path, delimiter=sep, skiprows=1, ndmin=2)
    return headers, data


def _field_columns(times, x, fields):
    nt, nx = len(times), len(x)
    cols = [np.repeat(times, nx), np.tile(x, nt)]
    return cols + [np.asarray(f).reshape(nt, nx) for f in fields]


def write_state(path, problem, state, sep=","):
    x = problem.mesh.free_coordinates()
    return write_table(path, ["time", "x", "u", "udot"],
                       _field_columns(state.times, x, [state.u, state.v]), sep)


def write_pressure(path, state, sep=","):
    return write_table(path, ["time", "pressure", "volume_residual"],
                       [state.times, state.pressure, state.volume_residual], sep)


def write_multiplier(path, state, sep=","):
    """Per-step constraint multiplier and Newton iteration count."""
    t = state.times
    return write_table(path, ["t_start", "t_end", "multiplier", "newton_iterations"],
                       [t[:-1], t[1:], state.multiplier, state.newton_iterations], sep)


def write_adjoint(path, problem, adjoint, sep=","):
    x = problem.mesh.free_coordinates()
    cols = _field_columns(adjoint.times, x, [adjoint.zeta0, adjoint.zeta1])
    cols.append(np.repeat(adjoint.pi, x.size))
    return write_table(path, ["time", "x", "zeta0", "zeta1", "pi"], cols, sep)


def write_fd_report(path, report, sep=","):
    rows = [(str(r.direction), r.component, r.h, r.fd, r.predicted, r.abs_error, r.rel_error)
            for r in report.rows]
    return write_records(path, ["direction", "component", "h", "fd", "predicted",
                                "abs_error", "rel_error"], rows, sep)


def write_iterations(path, report, sep=","):
    rows = report.log_rows()
    cols = list(zip(*rows)) if rows else [[]] * 6
    return write_table(path, ["iter", "J", "grad_norm_xi", "grad_tau", "tau", "step"], cols, sep)


def snapshot_indices(times, instants):
    """Nearest grid index for each requested instant inside ``[0, T]``."""
    out = []
    for t in instants:
        if times[0] <= t <= times[-1]:
            out.append(int(np.argmin(np.abs(times - t))))
    return out


def write_snapshots(directory, problem, state, xi, instants=SNAPSHOT_TIMES, sep=","):
    """``snapshots_control.csv`` and ``snapshots_state.csv`` at the requested instants.

    The control of interval ``[t_k, t_{k+1})`` is reported at ``t_k``; at the
    final time the last interval is used.
    """
    times = state.times
    idx = np.array(snapshot_indices(times, instants), dtype=int)
    xw = problem.mesh.nodes[problem.mesh.omega_nodes]
    rows = np.minimum(idx, len(xi) - 1)
    ctrl = write_table(os.path.join(directory, "snapshots_control.csv"), ["time", "x", "xi"],
                       _field_columns(times[idx], xw, [np.asarray(xi)[rows]]), sep)
    st = write_table(os.path.join(directory, "snapshots_state.csv"), ["time", "x", "u", "udot"],
                     _field_columns(times[idx], problem.mesh.free_coordinates(),
                                    [state.u[idx], state.v[idx]]), sep)
    return ctrl, st


def write_summary(path, items, sep=","):
    rows = [(k, v if isinstance(v, str) else str(v) if isinstance(v, (bool, int)) else FMT % v)
            for k, v in items]
    return write_records(path, ["key", "value"], rows, sep)
