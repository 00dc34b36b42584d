"""Time the compiled and numpy DV training loops on identical inputs.

    python3 benchmarks/bench_kernels.py [--steps 300] [--json out.json]

Both backends start from the same parameters and index stream; the script
also reports how far their bound traces drift apart.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from fsnid import kernels
from fsnid.approximator import DenseParams, OptimizerState, RecurrentParams

CASES = [
    # name, architecture, feature columns, batch, window
    ("dense d=1 b=100", "dense", 1, 100, 1),
    ("dense d=8 b=100", "dense", 8, 100, 1),
    ("dense d=64 b=10", "dense", 64, 10, 1),
    ("recurrent d=1 b=100 s=10", "recurrent", 1, 100, 10),
    ("recurrent d=8 b=32 s=10", "recurrent", 8, 32, 10),
]


def _inputs(arch, d, b, s, steps, rows=2000, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(rows, d))
    y = rng.integers(0, 2, rows).astype(np.intp)
    joint = rng.integers(0, rows - s + 1, (steps, b))
    marg = (joint + rng.integers(1, rows - s + 1, (steps, b))) % (rows - s + 1)
    if arch == "recurrent":
        joint = joint[..., None] + np.arange(s)
        marg = marg[..., None] + np.arange(s)
        params = RecurrentParams.init(d + 2, rng)
    else:
        params = DenseParams.init(d + 2, rng)
    return X, y, joint.astype(np.intp), marg.astype(np.intp), params


def _run(fn, X, y, joint, marg, params):
    p = params.copy()
    state = OptimizerState.for_params(p, lr=1e-3)
    trace = np.empty(joint.shape[0])
    t0 = time.perf_counter()
    fn(X, y, joint, marg, p, state, trace)
    return time.perf_counter() - t0, trace


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--json", help="also write results here")
    args = ap.parse_args(argv)
    if kernels.BACKEND != "compiled":
        print("compiled extension not available; build it with "
              "`pip install --no-build-isolation -e .`", file=sys.stderr)
        return 1
    compiled = {"dense": kernels._dense_dv_train_compiled,
                "recurrent": kernels._recurrent_dv_train_compiled}
    python = {"dense": kernels.dense_dv_train_py, "recurrent": kernels.recurrent_dv_train_py}
    rows = []
    print(f"{'case':28s} {'numpy us/step':>14s} {'compiled us/step':>17s} {'speedup':>8s} "
          f"{'max |trace diff|':>17s}")
    for name, arch, d, b, s in CASES:
        steps = args.steps if arch == "dense" else max(args.steps // 10, 10)
        data = _inputs(arch, d, b, s, steps)
        _run(compiled[arch], *data)  # warm-up
        t_py, tr_py = _run(python[arch], *data)
        t_c, tr_c = _run(compiled[arch], *data)
        diff = float(np.max(np.abs(tr_py - tr_c)))
        rows.append({"case": name, "steps": steps, "python_us": 1e6 * t_py / steps,
                     "compiled_us": 1e6 * t_c / steps, "speedup": t_py / t_c,
                     "max_trace_diff": diff})
        r = rows[-1]
        print(f"{name:28s} {r['python_us']:14.1f} {r['compiled_us']:17.1f} "
              f"{r['speedup']:7.1f}x {diff:17.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
