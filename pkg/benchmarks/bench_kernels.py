"""Time the numba and numpy flavours of each hot kernel on desk-scale inputs.

    python benchmarks/bench_kernels.py [--repeats 5] [--json out.json]

Each kernel is run once before timing so numba compile time is excluded; the
outputs of both flavours are compared before any timing is reported.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from mixagent import kernels
from mixagent._accel import HAVE_NUMBA


def _cases(rng):
    n, c, p = 8, 20000, 15
    cands = rng.dirichlet(np.ones(n), size=c)
    last, target = rng.dirichlet(np.ones(n), size=2)
    prior = rng.dirichlet(np.ones(n), size=p)
    score_args = (cands, last, target, prior, 7, 1.0, 1.0, 0.5, 1e-8)

    d, v, r, length = 8, 32, 4096, 12
    trans = rng.dirichlet(np.full(v, 0.2), size=(d, v))
    init = rng.dirichlet(np.ones(v), size=d)
    trans_cdf = np.cumsum(trans, axis=-1)
    init_cdf = np.cumsum(init, axis=-1)
    domains = rng.integers(0, d, size=r)
    u = rng.random((r, length))
    sample_args = (init_cdf, trans_cdf, domains, u)

    tokens = rng.integers(0, v, size=(r, length))
    count_args = (tokens, v)
    return [
        ("inductive_scores", kernels.inductive_scores_numpy, kernels.inductive_scores_numba, score_args, "20000 cands x 8 domains, 15 prior rows"),
        ("markov_sample", kernels.markov_sample_numpy, kernels.markov_sample_numba, sample_args, "4096 seqs x 12 tokens, V=32"),
        ("bigram_counts", kernels.bigram_counts_numpy, kernels.bigram_counts_numba, count_args, "4096 seqs x 12 tokens, V=32"),
    ]


def best_of(fn, args, repeats):
    fn(*args)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write the timings here")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba unavailable (or MIXAGENT_NO_NUMBA set): only the numpy flavour can run")
    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'kernel':<18}{'numpy ms':>11}{'numba ms':>11}{'speedup':>9}  workload")
    for name, f_np, f_nb, kargs, what in _cases(rng):
        t_np = best_of(f_np, kargs, args.repeats)
        t_nb = None
        if HAVE_NUMBA:
            a, b = f_np(*kargs), f_nb(*kargs)
            if a.dtype.kind == "f":
                np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
            else:
                np.testing.assert_array_equal(a, b)
            t_nb = best_of(f_nb, kargs, args.repeats)
        speed = f"{t_np / t_nb:8.1f}x" if t_nb else "       -"
        nb_ms = f"{t_nb * 1e3:11.2f}" if t_nb else f"{'-':>11}"
        print(f"{name:<18}{t_np * 1e3:11.2f}{nb_ms}{speed}  {what}")
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "workload": what})
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
