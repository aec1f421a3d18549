"""Time the per-row kernels with numba and with the plain numpy fallback.

Each backend runs in its own interpreter because the choice is fixed at
import time.  Usage::

    python3 benchmarks/bench_kernels.py [--rows 200] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys
import textwrap

WORKER = textwrap.dedent("""
    import json, sys, time
    import numpy as np
    from pixelce import _kernels as K, antenna, channel, sensing, estimator

    rows, repeat = int(sys.argv[1]), int(sys.argv[2])
    net = antenna.synth_network(39, 72, seed=1, pattern_rank=9)
    rng = np.random.default_rng(0)
    op = sensing.build_operator(net, sensing.select_coders(net, 30, seed=rng), 1.0, 9)
    hv = channel.synth_channel(rows, 72, 6 * rows // 16 or 1, rng)
    s2 = channel.snr_db_to_sigma2(20.0, 1.0, rows, 72)
    obs = channel.observe(hv, channel.dft_bs_array(rows), op.patterns, 1.0, s2, rng)
    yt = sensing.project_observation(obs, op)

    estimator.run_mmp_gamp(yt[:2], op, s2)  # compile / warm caches
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        estimator.run_mmp_gamp(yt, op, s2)
        best = min(best, time.perf_counter() - start)
    print(json.dumps({"backend": K.BACKEND, "seconds": best, "rows": rows}))
""")


def run(disable: bool, rows: int, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("PIXELCE_DISABLE_NUMBA", None)
    if disable:
        env["PIXELCE_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(rows), str(repeat)],
                         check=True, capture_output=True, text=True, env=env)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--rows", type=int, default=200, help="rows (BS antennas) estimated per run")
    parser.add_argument("--repeat", type=int, default=3, help="runs per backend; the best is reported")
    args = parser.parse_args(argv)
    fast = run(False, args.rows, args.repeat)
    slow = run(True, args.rows, args.repeat)
    for res in (fast, slow):
        print(f"{res['backend']:>6}: {res['seconds']:.3f} s for {res['rows']} rows "
              f"({1e3 * res['seconds'] / res['rows']:.2f} ms/row)")
    print(f"speedup: {slow['seconds'] / fast['seconds']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
