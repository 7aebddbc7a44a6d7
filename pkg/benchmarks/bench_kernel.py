"""Throughput of the compiled and pure-Python closed-loop kernels.

    python3 benchmarks/bench_kernel.py --steps 300000 --N 100

Both backends run the same seeded trial; the script also checks that their
final states are bitwise identical.  The reference codec loop (protocol
checked, one Python object per step) is timed over a shorter run for scale.
"""

import argparse
import time
from fractions import Fraction

import numpy as np

from zoomctl.codec import ClosedLoop
from zoomctl.kernel import LoopRunner, available_backends
from zoomctl.model import SchemeParams, SystemModel
from zoomctl.noise import ScaledBG, sample


def timed_run(model, params, backend, steps, seed, repeat):
    best = float("inf")
    for _ in range(repeat):
        r = LoopRunner(model, params, seed, backend=backend)
        t0 = time.perf_counter()
        r.run(max_T=steps)
        best = min(best, time.perf_counter() - t0)
    return best, r


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=300_000)
    ap.add_argument("--N", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--reference-steps", type=int, default=20_000)
    args = ap.parse_args()

    model = SystemModel([[1.2]], [[1.0]], [[1.0]], ScaledBG(4.0, 2.0))
    params = SchemeParams(K=2, N=args.N, g=Fraction(4, 3), p=1, q_exp=3, L=9.0, beta=3.95, eps=0.95)

    results = {}
    print(f"{'backend':<12}{'steps':>10}{'seconds':>10}{'ns/step':>10}")
    for b in available_backends():
        t, r = timed_run(model, params, b, args.steps, args.seed, args.repeat)
        results[b] = r
        print(f"{b:<12}{args.steps:>10}{t:>10.3f}{t / args.steps * 1e9:>10.0f}")

    loop = ClosedLoop(model, params, ring_capacity=1)
    W = sample(model.noise, np.random.default_rng(args.seed), args.reference_steps)
    t0 = time.perf_counter()
    loop.run(W)
    t = time.perf_counter() - t0
    print(f"{'reference':<12}{args.reference_steps:>10}{t:>10.3f}{t / args.reference_steps * 1e9:>10.0f}")

    if len(results) == 2:
        a, c = results["python"], results["cython"]
        same = all(np.array_equal(u, v) for u, v in ((a.x, c.x), (a.ist, c.ist), (a.fst, c.fst)))
        print(f"bitwise identical final state: {same}")


if __name__ == "__main__":
    main()
