"""Time the hot kernels compiled with numba against the pure-numpy fallback.

Each mode runs in its own interpreter because ``LBLNAV_DISABLE_JIT`` is
read at import time:

    python benchmarks/bench_kernels.py            # both modes, side by side
    python benchmarks/bench_kernels.py --single   # current mode only
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def run_single(steps, repeat):
    from lblnav import _jit, kernels
    from lblnav.filters import FilterTuning, init_filter
    from lblnav.obsv import signals_from_truth
    from lblnav.truthsim import DEFAULT_LANDMARKS, HelixTrajectory, NoiseConfig, simulate

    s = DEFAULT_LANDMARKS
    log = simulate(HelixTrajectory(), s, NoiseConfig(), 100, 1, steps / 100.0, np.random.default_rng(0))
    st0 = init_filter(log.frame(0), s, FilterTuning.default(4))
    a, w, R = log.a_meas[:steps], log.w_meas[:steps], log.R_meas[:steps]
    Qx = 1e-5 * np.eye(17)
    sig = signals_from_truth(log.truth, s)
    n_int = min(steps, 1000)
    ts, us, rs = sig.t[: n_int + 1], sig.u[: n_int + 1], sig.ranges[: n_int + 1]

    cases = {
        f"augmented_steps x{steps}": lambda: kernels.augmented_steps(st0.chi, st0.P, a, w, R, 0.01, s, Qx, 1.0),
        f"chain_steps x{steps}": lambda: kernels.chain_steps(st0.chi[:9], st0.P[:9, :9], a, w, R, 0.01, Qx[:9, :9]),
        f"interval_transitions x{n_int}": lambda: kernels.interval_transitions(ts, us, rs, s, 1e-12, 12),
    }
    out = {}
    for name, fn in cases.items():
        fn()  # warm-up (compilation in jit mode)
        out[name] = _best_of(fn, repeat)
    return {"numba": _jit.USE_NUMBA, "timings": out}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=6000, help="IMU steps per filter kernel call")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--single", action="store_true", help="benchmark the current mode and print JSON")
    args = parser.parse_args(argv)

    if args.single:
        print(json.dumps(run_single(args.steps, args.repeat)))
        return 0

    results = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, LBLNAV_DISABLE_JIT=flag)
        cmd = [sys.executable, __file__, "--single", "--steps", str(args.steps), "--repeat", str(args.repeat)]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])["timings"]

    print(f"{'kernel':34s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speedup':>9s}")
    for name, fast in results["numba"].items():
        slow = results["numpy"][name]
        print(f"{name:34s} {fast:11.4f} {slow:11.4f} {slow / fast:8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
