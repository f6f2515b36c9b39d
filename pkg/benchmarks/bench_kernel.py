"""Compare the compiled RK4 kernel with the pure-Python fallback.

    python3 benchmarks/bench_kernel.py [--duration 2.0] [--repeat 3]

Both backends integrate the same scalar loop (T = 0.1, omega = 4) and the
two-axis telescope loop; the script checks they agree bit-for-bit and prints
wall-clock times and the speedup.
"""

import argparse
import time

import numpy as np

from cascade_adrc.sim import available_backends, run_scenario, scalar_config, telescope_config


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--duration", type=float, default=2.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = available_backends()
    if "compiled" not in backends:
        print("compiled kernel not built; only the fallback is available")
    cases = {
        "scalar T=0.1 w=4": scalar_config(duration=args.duration, record_every=10),
        "telescope 500 v_s": telescope_config(500, -0.15, "reference_based", duration=args.duration),
    }
    print(f"{'case':<20} {'backend':<9} {'steps':>7} {'seconds':>9} {'us/step':>8}")
    for label, cfg in cases.items():
        res = {}
        for b in backends:
            sec, r = best_of(lambda: run_scenario(cfg, b), args.repeat)
            res[b] = (sec, r)
            print(f"{label:<20} {b:<9} {cfg.nsteps:>7d} {sec:>9.4f} {1e6 * sec / cfg.nsteps:>8.2f}")
        if len(res) == 2:
            (tc, rc), (tp, rp) = res["compiled"], res["python"]
            same = np.array_equal(rc.x1, rp.x1) and np.array_equal(rc.ISE_axes, rp.ISE_axes)
            print(f"{label:<20} speedup {tp / tc:.1f}x, identical results: {same}")


if __name__ == "__main__":
    main()
