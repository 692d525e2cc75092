"""Compare the compiled kernels against the numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 5]

Prints one row per kernel with the best wall time for each backend and the
speedup of the extension over the fallback.
"""
import argparse
import time

import numpy as np
import scipy.sparse as sp

from rsmnce import kernels
from rsmnce.alias import build_alias
from rsmnce.benchmark import time_config
from rsmnce.nce import generate_bundles


def best_time(fn, repeats):
    fn()
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    K = 20000
    table = build_alias(rng.random(K))
    u1, u2 = rng.random(1_000_000), rng.random(1_000_000)
    X = sp.csr_matrix(rng.poisson(0.01, size=(128, K)).astype(np.float64))
    pre = rng.normal(0, 5, size=(128 * 6, 128))
    Xc = X.tocsc()
    cols = np.flatnonzero(np.diff(Xc.indptr))
    Xc = Xc[:, cols]
    W = rng.normal(size=(K, 128))
    hidden = rng.random((128, 128))

    def update():
        kernels.csc_scatter_update(W, cols, Xc, hidden, 1e-9)

    return [
        ("alias_draw 1e6", lambda: kernels.alias_draw(table.prob, table.alias, u1, u2)),
        ("pns bundles k=25", lambda: generate_bundles(X, table, 25, 0.5, np.random.default_rng(0))),
        ("softplus_sigmoid", lambda: kernels.softplus_sigmoid(pre)),
        ("csc_rows_times", lambda: kernels.csc_rows_times(W, cols, Xc)),
        ("csc_scatter_update", update),
        ("nce25 minibatch K=5000", lambda: time_config("nce25", 5000, batches=3, warmup=1)),
        ("cd1 minibatch K=5000", lambda: time_config("cd1", 5000, batches=3, warmup=1)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "ext" not in backends:
        print("compiled extension not available; only the python backend can be timed")
    previous = kernels.active_backend()
    print(f"{'kernel':<26}" + "".join(f"{b + ' (s)':>14}" for b in backends) + f"{'speedup':>10}")
    try:
        for name, fn in cases(np.random.default_rng(0)):
            times = {}
            for b in backends:
                kernels.use_backend(b)
                times[b] = best_time(fn, args.repeats)
            ratio = times["python"] / times["ext"] if "ext" in times else float("nan")
            print(f"{name:<26}" + "".join(f"{times[b]:>14.5f}" for b in backends) + f"{ratio:>10.2f}")
    finally:
        kernels.use_backend(previous)


if __name__ == "__main__":
    main()
