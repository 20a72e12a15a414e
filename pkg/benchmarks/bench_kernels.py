"""Compare the compiled pattern-code kernel against the pure-Python fallback.

Runs the same two workloads under ZDE_KERNELS=c and ZDE_KERNELS=py in child
processes (the backend is fixed at import time) and prints a small table.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def workload() -> dict:
    import numpy as np

    from zde import kernels
    from zde.construction import DESK, build_delta, choose_params, proximity_check, sample_block_set
    from zde.lattice import LatticeMode
    from zde.measures import bernoulli, bernoulli_entropy

    out = {"backend": kernels.BACKEND}

    # raw kernel: depth-4 window codes over every translate of a long field
    rng = np.random.default_rng(0)
    field = rng.integers(0, 4, size=200_000).astype(np.int64)
    translates = np.arange(field.size - 4, dtype=np.int64)
    offsets = np.arange(5, dtype=np.int64)
    t0 = time.perf_counter()
    for _ in range(5):
        codes = kernels.pattern_codes(field, translates, offsets, 4)
    out["pattern_codes_s"] = time.perf_counter() - t0
    out["checksum"] = int(codes[:100].sum())

    # end-to-end consumer: the shift-orbit empirical-distance sweep
    P = LatticeMode.POSITIVE
    params = choose_params("0.5", "0.2", "0.4", bernoulli_entropy(["0.25"] * 4), 4, 1, P,
                           mode_flag=DESK, m_cap=9)
    mu0 = bernoulli(["0.25"] * 4, 1, 1, P)
    blocks = sample_block_set(mu0, params.M, params.eta, params.size_lo, params.size_hi, seed=7)
    sub = build_delta(blocks, params, "uniform")
    t0 = time.perf_counter()
    rep = proximity_check(sub, mu0, "0.4", samples=25, seed=0)
    out["proximity_s"] = time.perf_counter() - t0
    out["proximity_pass"] = rep.passed
    return out


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3, help="best-of-N child runs")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.child:
        print(json.dumps(workload()))
        return 0

    results = {}
    for backend in ("c", "py"):
        best = None
        for _ in range(args.repeat):
            env = dict(os.environ, ZDE_KERNELS=backend)
            proc = subprocess.run(
                [sys.executable, __file__, "--child"],
                capture_output=True, text=True, env=env, check=True,
            )
            run = json.loads(proc.stdout)
            if best is None or run["pattern_codes_s"] < best["pattern_codes_s"]:
                best = run
        results[backend] = best

    c, py = results["c"], results["py"]
    if c["checksum"] != py["checksum"]:
        print("BACKEND MISMATCH: kernels disagree on the same input", file=sys.stderr)
        return 1
    print(f"{'workload':<22} {'compiled':>10} {'pure':>10} {'speedup':>9}")
    for key, label in (("pattern_codes_s", "window codes x5"), ("proximity_s", "proximity sweep")):
        ratio = py[key] / c[key]
        print(f"{label:<22} {c[key]:>9.3f}s {py[key]:>9.3f}s {ratio:>8.1f}x")
    print(f"backends reported: compiled={c['backend']} pure={py['backend']}; "
          f"proximity pass: {c['proximity_pass']} / {py['proximity_pass']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
