"""Compare the compiled and pure-numpy sweep kernels, and per-sweep scaling in S.

    python benchmarks/bench_sweep.py [--p 40] [--subjects 1 2 4 8] [--repeats 5]
"""
import argparse
import time

import numpy as np

from covsel import _kernels
from covsel.solvers import PenaltyConfig, initial_state, lambda_max, mm_iteration
from covsel.synthetic import CohortSpec, generate_cohort
from covsel.covariance import preprocess, sample_covariance


def make_state(subjects, p, seed=0):
    spec = CohortSpec(subjects=subjects, variables=p, samples_per_session=3 * p, seed=seed)
    _, cohort = generate_cohort(spec)
    covs = [sample_covariance(preprocess(a)) for a, _ in cohort]
    return covs, initial_state(covs)


def time_sweep(state, cfg, backend, repeats):
    """Median wall time of one sweep from ``state``."""
    mm_iteration(state, cfg, backend)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        mm_iteration(state, cfg, backend)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--p", type=int, default=40)
    parser.add_argument("--subjects", type=int, nargs="+", default=[1, 2, 4, 8])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)

    backends = ["python"] + (["cython"] if _kernels.BACKEND == "cython" else [])
    print(f"p = {args.p}, one column pass per sweep, median of {args.repeats}")
    print(f"{'S':>4}" + "".join(f"{b + ' (ms)':>16}" for b in backends)
          + ("   speedup" if len(backends) == 2 else "") + "   ratio vs S/2")
    previous = None
    for s in args.subjects:
        covs, state = make_state(s, args.p)
        cfg = PenaltyConfig(lam=0.1 * lambda_max(covs), column_passes=1)
        t = {b: time_sweep(state, cfg, b, args.repeats) for b in backends}
        line = f"{s:>4}" + "".join(f"{1e3 * t[b]:16.2f}" for b in backends)
        if len(backends) == 2:
            line += f"{t['python'] / t['cython']:10.1f}"
        fast = t[backends[-1]]
        if previous is not None and s == 2 * previous[0]:
            line += f"{fast / previous[1]:15.2f}"
        print(line)
        previous = (s, fast)


if __name__ == "__main__":
    main()
