"""Benchmark the min-cost-flow matching kernel: JIT backend vs pure numpy.

Runs the same optimal matching workload in two subprocesses, one with
PILOTMATCH_NUMBA=1 and one with PILOTMATCH_NUMBA=0, and reports wall
times plus a cross-backend equality check on the optimal totals.

Usage: python benchmarks/bench_flow.py [--nt 100] [--nc 1900] [--k 1 2 5]
"""

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np
from pilotmatch import flow
from pilotmatch.core import Dataset
from pilotmatch.distance import build_distances
from pilotmatch.matching import optimal_k_match, full_match, scale_costs

nt, nc, ks = json.loads(sys.argv[1])
rng = np.random.default_rng(12345)
X = rng.normal(size=(nt + nc, 5))
T = np.zeros(nt + nc, dtype=np.int64); T[:nt] = 1
ds = Dataset(X=X, T=T, Y=np.zeros(nt + nc))
dm = build_distances(ds, "raw_covariates", X)

out = {"backend": flow.BACKEND, "runs": []}
# warm-up triggers any JIT compilation outside the timed region
optimal_k_match(dm, 1)
for k in ks:
    t0 = time.perf_counter()
    m = optimal_k_match(dm, k)
    dt = time.perf_counter() - t0
    total = int(sum(int(round(s.set_distance * 1e6)) for s in m.sets))
    out["runs"].append({"task": f"1:{k}", "seconds": dt, "total": total})
t0 = time.perf_counter()
m = full_match(dm)
dt = time.perf_counter() - t0
total = int(sum(int(round(s.set_distance * 1e6)) for s in m.sets))
out["runs"].append({"task": "full", "seconds": dt, "total": total})
print(json.dumps(out))
"""


def run_backend(numba_flag, nt, nc, ks):
    env = dict(os.environ, PILOTMATCH_NUMBA="1" if numba_flag else "0")
    proc = subprocess.run(
        [sys.executable, "-c", _WORKER, json.dumps([nt, nc, ks])],
        env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nt", type=int, default=100)
    ap.add_argument("--nc", type=int, default=1900)
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2, 5])
    args = ap.parse_args()

    jit = run_backend(True, args.nt, args.nc, args.k)
    py = run_backend(False, args.nt, args.nc, args.k)
    print(f"instance: {args.nt} treated x {args.nc} controls")
    print(f"{'task':>6}  {jit['backend']:>10}  {py['backend']:>10}  speedup  totals-equal")
    for a, b in zip(jit["runs"], py["runs"]):
        assert a["task"] == b["task"]
        equal = "yes" if a["total"] == b["total"] else "NO"
        speed = b["seconds"] / a["seconds"] if a["seconds"] > 0 else float("inf")
        print(f"{a['task']:>6}  {a['seconds']:>9.4f}s  {b['seconds']:>9.4f}s  "
              f"{speed:>6.1f}x  {equal:>12}")
    if any(a["total"] != b["total"] for a, b in zip(jit["runs"], py["runs"])):
        sys.exit(1)


if __name__ == "__main__":
    main()
