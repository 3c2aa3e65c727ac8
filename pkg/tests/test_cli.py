import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from elastocontrol import cli, output
from elastocontrol import config as cfgmod

SMALL = ["--set", "T=2.0", "--dt", "0.05", "--mesh-h", "0.05"]


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_forward_zero_control_is_all_zero(tmp_path):
    assert run(tmp_path, "forward", *SMALL) == 0
    headers, data = output.read_table(tmp_path / "state.csv")
    assert headers == ["time", "x", "u", "udot"]
    assert data.shape == (41 * 20, 4) and np.abs(data[:, 2:]).max() == 0.0
    headers, data = output.read_table(tmp_path / "pressure.csv")
    assert headers == ["time", "pressure", "volume_residual"]
    assert np.abs(data[:, 1:]).max() == 0.0
    headers, data = output.read_table(tmp_path / "multiplier.csv")
    assert headers == ["t_start", "t_end", "multiplier", "newton_iterations"] and data.shape[0] == 40


def test_forward_bump_and_delimiter(tmp_path):
    assert run(tmp_path, "forward", *SMALL, "--control", "bump", "--set", "delimiter=tab") == 0
    headers, data = output.read_table(tmp_path / "pressure.csv", sep="\t")
    assert np.abs(data[:, 1]).max() > 0 and np.abs(data[:, 2]).max() <= 1e-10
    # the written configuration reproduces the run
    cfg = cfgmod.load(tmp_path / "config.ini")
    assert cfg.T == 2.0 and cfg.dt == 0.05 and cfg.delimiter == "tab"


def test_full_precision_output(tmp_path):
    assert run(tmp_path, "forward", *SMALL, "--control", "bump") == 0
    _, a = output.read_table(tmp_path / "state.csv")
    pb = cfgmod.load(tmp_path / "config.ini").problem()
    from elastocontrol.forward import solve_forward
    s = solve_forward(pb, cli.bump_control(pb))
    assert np.array_equal(a[:, 2], s.u.ravel())


def test_adjoint_output(tmp_path):
    assert run(tmp_path, "adjoint", *SMALL, "--control", "bump", "--set", "tau=0.9") == 0
    headers, data = output.read_table(tmp_path / "adjoint.csv")
    assert headers == ["time", "x", "zeta0", "zeta1", "pi"]
    assert np.abs(data[:, 3]).max() > 0


def test_gradcheck_output(tmp_path):
    assert run(tmp_path, "gradcheck", *SMALL, "--control", "bump") == 0
    with open(tmp_path / "gradcheck.csv") as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "direction,component,h,fd,predicted,abs_error,rel_error"
    assert len(lines) == 1 + 5 * 5 + 1 and lines[-1].startswith("0,tau,")


def test_optimize_outputs(tmp_path, capsys):
    assert run(tmp_path, "optimize", *SMALL, "--set", "max_iters=3") == 0
    headers, it = output.read_table(tmp_path / "iterations.csv")
    assert headers == ["iter", "J", "grad_norm_xi", "grad_tau", "tau", "step"]
    assert list(it[:, 0]) == [0, 1, 2, 3]
    assert it[-1, 1] > it[0, 1]
    with open(tmp_path / "summary.csv") as fh:
        keys = [line.split(",")[0] for line in fh.read().splitlines()[1:]]
    assert {"J", "tau", "grad_norm", "converged", "reason"} <= set(keys)
    xi = np.load(tmp_path / "control.npy")
    assert xi.shape == (40, 6)
    headers, snap = output.read_table(tmp_path / "snapshots_control.csv")
    assert headers == ["time", "x", "xi"]
    headers, _ = output.read_table(tmp_path / "snapshots_state.csv")
    assert headers == ["time", "x", "u", "udot"]
    assert "max_iters" in capsys.readouterr().out


def test_seedless_determinism(tmp_path):
    assert run(tmp_path, "optimize", *SMALL, "--set", "max_iters=2", "--seedless") == 0
    assert run(tmp_path, "forward", *SMALL, "--control", "bump", "--seedless") == 0


def test_config_errors_exit_2(tmp_path, capsys):
    assert run(tmp_path, "forward", *SMALL, "--set", "kappa=-1", "--set", "law=neo") == 2
    err = capsys.readouterr().err
    assert "config error: law:" in err
    assert run(tmp_path, "forward", "--set", "bogus=1") == 2
    assert "config error: bogus: unknown key" in capsys.readouterr().err
    assert cli.main(["forward", "--config", str(tmp_path / "missing.ini")]) == 2
    np.save(tmp_path / "bad.npy", np.zeros((3, 3)))
    assert run(tmp_path, "forward", *SMALL, "--control", str(tmp_path / "bad.npy")) == 2
    assert "config error: control:" in capsys.readouterr().err


def test_solver_failure_exit_3(tmp_path, capsys):
    code = run(tmp_path, "forward", *SMALL, "--control", "bump", "--set", "newton_max_iter=0")
    assert code == 3
    assert "solver failure at step 0" in capsys.readouterr().err


def test_control_file_round_trip(tmp_path):
    pb = cfgmod.apply_overrides(cfgmod.RunConfig(), ["T=2.0", "dt=0.05", "mesh_h=0.05"]).problem()
    np.save(tmp_path / "xi.npy", cli.bump_control(pb))
    assert run(tmp_path, "forward", *SMALL, "--control", str(tmp_path / "xi.npy")) == 0


def test_selftest_passes(capsys):
    assert cli.main(["selftest"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


@pytest.mark.parametrize("flag", ["0", "1"])
def test_module_entry_point_backends(tmp_path, flag):
    env = dict(os.environ, ELASTOCONTROL_DISABLE_NUMBA=flag)
    out = tmp_path / flag
    res = subprocess.run([sys.executable, "-m", "elastocontrol", "forward", *SMALL, "--control", "bump",
                          "--out", str(out)], env=env, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    code = "from elastocontrol import BACKEND; print(BACKEND)"
    backend = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert backend.stdout.strip() == ("numpy" if flag == "1" else "numba")


def test_backends_agree(tmp_path):
    for flag in ("0", "1"):
        env = dict(os.environ, ELASTOCONTROL_DISABLE_NUMBA=flag)
        subprocess.run([sys.executable, "-m", "elastocontrol", "adjoint", *SMALL, "--control", "bump",
                        "--out", str(tmp_path / flag)], env=env, check=True, capture_output=True)
    _, a = output.read_table(tmp_path / "0" / "adjoint.csv")
    _, b = output.read_table(tmp_path / "1" / "adjoint.csv")
    assert np.abs(a - b).max() <= 1e-12 * np.abs(b).max()


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="one random direction is nearly orthogonal to the gradient; "
                   "its relative error decays like dt but is still 0.54 at dt = 0.002")
def test_gradcheck_fine_step_default_problem(tmp_path):
    assert run(tmp_path, "gradcheck", "--dt", "0.002") == 0
    best = {}
    with open(tmp_path / "gradcheck.csv") as fh:
        for r in csv.DictReader(fh):
            key = (r["direction"], r["component"])
            best[key] = min(best.get(key, np.inf), float(r["rel_error"]))
    assert max(best.values()) <= 1e-2
