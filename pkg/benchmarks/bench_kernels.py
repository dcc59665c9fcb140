"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py --sides 16 32 64 --repeats 5
    python benchmarks/bench_kernels.py --end-to-end     # whole stratified estimate, both backends

Kernel timings call both modules directly; the end-to-end run starts a fresh
interpreter per backend (RGCR_PURE_PYTHON=1 selects the fallback at import).
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from rgcr import _pykernels
from rgcr.clustering import beta_draws, descending_order, make_weights
from rgcr.graph import gen_small_world
from rgcr.randomization import arm_tables

try:
    from rgcr import _ckernels
except ImportError:  # not built
    _ckernels = None


def best_of(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(g, seed=0):
    """(name, callable taking a kernel module) for every hot kernel."""
    rng = np.random.default_rng(seed)
    x = beta_draws(make_weights(g).w, rng)
    order = descending_order(x)
    labels = _pykernels.three_net_labels(g.indptr, g.indices, order)
    aptr, aidx = _pykernels.adjacent_clusters(g.indptr, g.indices, labels)
    k = int(labels.max()) + 1
    rmax = int(2 * np.diff(aptr).max())
    same1, same0, opp = arm_tables("independent", 0.5, k, rmax)
    opp = np.ascontiguousarray(opp)
    rows = rng.integers(g.n, size=20_000)
    cols = rng.integers(g.n, size=20_000)
    dense = [np.zeros((g.n, g.n)) for _ in range(3)]

    return [
        ("one_hop_max_labels", lambda m: m.one_hop_max_labels(g.indptr, g.indices, x)),
        ("three_net_labels", lambda m: m.three_net_labels(g.indptr, g.indices, order)),
        ("ball_sizes(r=2)", lambda m: m.ball_sizes(g.indptr, g.indices, 2)),
        ("adjacent_clusters", lambda m: m.adjacent_clusters(g.indptr, g.indices, labels)),
        ("pair_intersections", lambda m: m.pair_intersections(aptr, aidx, rows, cols)),
        ("accumulate_joint", lambda m: m.accumulate_joint(aptr, aidx, k, same1, same0, opp, 1.0,
                                                          *dense)),
    ]


END_TO_END = """
import time
from rgcr import BACKEND
from rgcr.clustering import make_weights
from rgcr.estimation import estimate_marginals_stratified
from rgcr.graph import gen_small_world
g = gen_small_world({side}, seed=1)
t0 = time.perf_counter()
estimate_marginals_stratified(g, make_weights(g), "three_net", "independent", 0.5, 2, 7)
print(BACKEND, time.perf_counter() - t0)
"""


def end_to_end(side):
    out = {}
    for pure in ("0", "1"):
        env = {**os.environ, "RGCR_PURE_PYTHON": pure}
        res = subprocess.run([sys.executable, "-c", END_TO_END.format(side=side)], env=env,
                             capture_output=True, text=True, check=True)
        backend, secs = res.stdout.split()
        out[backend] = float(secs)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sides", type=int, nargs="+", default=[16, 32, 48])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--end-to-end", action="store_true")
    ap.add_argument("--json", help="also write results to this path")
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
        return 1

    results = []
    print(f"{'n':>6} {'kernel':<20} {'cython ms':>10} {'python ms':>10} {'speedup':>8}")
    for side in args.sides:
        g = gen_small_world(side, seed=1)
        for name, call in kernel_cases(g):
            tc = best_of(lambda: call(_ckernels), args.repeats)
            tp = best_of(lambda: call(_pykernels), args.repeats)
            results.append({"n": g.n, "kernel": name, "cython_s": tc, "python_s": tp})
            print(f"{g.n:>6} {name:<20} {tc * 1e3:>10.3f} {tp * 1e3:>10.3f} {tp / tc:>7.1f}x")
    if args.end_to_end:
        side = args.sides[0]
        e2e = end_to_end(side)
        print(f"stratified estimate, side {side}: cython {e2e['cython']:.2f}s, "
              f"python {e2e['python']:.2f}s ({e2e['python'] / e2e['cython']:.1f}x)")
        results.append({"n": side * side, "kernel": "stratified_estimate", "cython_s": e2e["cython"],
                        "python_s": e2e["python"]})
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
