"""Compiled (numba) against pure-numpy kernels on the reference problem.

Each backend runs in its own interpreter because the choice is fixed at
import time through ``ELASTOCONTROL_DISABLE_NUMBA``.

    python3 benchmarks/bench_kernels.py [--dt 0.02] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from elastocontrol import BACKEND, ObjectiveConfig, RunConfig, solve_adjoint, solve_forward
from elastocontrol import kernels
dt, repeat = float(sys.argv[1]), int(sys.argv[2])
cfg = RunConfig(dt=dt)
pb = cfg.problem()
g = pb.grid
t = 0.5 * (g.times[:-1] + g.times[1:])
xi = 0.05 * (np.sin(np.pi * t / 15) * np.exp(-((t - 5) / 3) ** 2))[:, None] * np.ones((1, pb.mesh.n_control))
obj = ObjectiveConfig()

def best(fn):
    fn()  # warm-up (includes compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter(); fn(); times.append(time.perf_counter() - t0)
    return min(times)

state = solve_forward(pb, xi)
y = np.random.default_rng(0).standard_normal((2000, 3))
out = {
    "backend": BACKEND,
    "element_response": best(lambda: [kernels.element_response(0, pb.model.param_vector(), y[:, 0] * 0.1) for _ in range(200)]),
    "forward": best(lambda: solve_forward(pb, xi)),
    "adjoint": best(lambda: solve_adjoint(pb, state, 7.5, obj)),
    "pressure_max": float(state.pressure.max()),
}
print(json.dumps(out))
"""


def run(flag, dt, repeat):
    env = dict(os.environ, ELASTOCONTROL_DISABLE_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(dt), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dt", type=float, default=0.02)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = run("0", args.dt, args.repeat)
    slow = run("1", args.dt, args.repeat)
    print(f"dt={args.dt}  best of {args.repeat}")
    print(f"{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}")
    for key in ("element_response", "forward", "adjoint"):
        print(f"{key:<18}{fast[key]:>12.4f}{slow[key]:>12.4f}{slow[key] / fast[key]:>10.1f}")
    diff = abs(fast["pressure_max"] - slow["pressure_max"])
    print(f"max pressure agreement between backends: {diff:.2e}")


if __name__ == "__main__":
    main()
