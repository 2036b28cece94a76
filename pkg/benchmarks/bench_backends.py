"""Compiled vs pure-Python recurrent scans.

    python benchmarks/bench_backends.py [--L 512,2048,8192] [--H 2] [--dk 32] [--reps 5]

Prints median seconds per backend and the speedup of the compiled scan.  Both
backends are also checked to give identical outputs on the timed instance.
"""

import argparse

import numpy as np

from sla import kernels
from sla.bench import compare_backends
from sla.mechanisms import AttentionConfig, GateWeights, SequenceBatch, head_gates, sla_recurrent
from sla.tensor import Rng


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--L", default="512,2048,8192")
    ap.add_argument("--H", type=int, default=2)
    ap.add_argument("--dk", type=int, default=32)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    grid = [int(x) for x in args.L.split(",")]
    backends = kernels.available_backends()
    print("available backends:", ", ".join(backends))

    config = AttentionConfig(max(grid), args.H, args.dk)
    rng = Rng(args.seed)
    batch, weights = SequenceBatch.random(rng, config), GateWeights.random(rng, config)
    gates = head_gates(batch.q, weights.w_gq), head_gates(batch.k, weights.w_gk)
    outs = [sla_recurrent(batch, *gates, config, backend=b)[0] for b in backends]
    drift = max(float(np.max(np.abs(o - outs[0]))) for o in outs)
    print(f"max output difference across backends: {drift:.3e}")

    points = compare_backends(config, grid, args.reps, args.seed)
    by = {(p.backend, p.L): p.wall_time for p in points}
    print(f"{'L':>6}  " + "  ".join(f"{b:>10}" for b in backends) + "  speedup")
    for L in grid:
        row = [by[(b, L)] for b in backends]
        speed = by[("python", L)] / by[("compiled", L)] if len(backends) > 1 else float("nan")
        print(f"{L:>6}  " + "  ".join(f"{t:10.5f}" for t in row) + f"  {speed:7.2f}x")


if __name__ == "__main__":
    main()
