"""Compare the compiled and pure-Python row kernels.

Usage::

    python benchmarks/bench_kernels.py --d 10 --n 1000 --rate 0.3 --repeat 20

Prints one line per (kernel, backend) with the median wall time and the
speed-up of the compiled backend, after checking both backends agree.
"""
import argparse
import statistics
import sys
import time

import numpy as np

from missnodags import kernels
from missnodags.imputer import build_interventional_precision
from missnodags.sem import Experiment


def _problem(d, n, rate, seed):
    rng = np.random.default_rng(seed)
    B = rng.uniform(-0.4, 0.4, (d, d)) * (rng.random((d, d)) < 2.0 / d)
    np.fill_diagonal(B, 0.0)
    B *= min(1.0, 0.9 / np.linalg.norm(B, 2))
    precision = build_interventional_precision(B, np.full(d, 16.0), Experiment(d, (0,)))
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    x = rng.multivariate_normal(np.zeros(d), cov, size=n)
    observed = rng.random((n, d)) >= rate
    observed[:, 0] = True
    z = rng.standard_normal((n, d))
    return precision, cov, x, observed, z


def _time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--d", type=int, default=10)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--rate", type=float, default=0.3)
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    try:
        from missnodags import _kernels  # noqa: F401
    except ImportError:
        print("compiled backend not built; nothing to compare", file=sys.stderr)
        return 1

    precision, cov, x, observed, z = _problem(args.d, args.n, args.rate, args.seed)
    jobs = {
        "impute_rows": lambda b: kernels.impute_rows(precision, x, observed, z, backend=b),
        "marginal_loglik_rows": lambda b: kernels.marginal_loglik_rows(cov, x, observed, backend=b),
    }
    print(f"d={args.d} n={args.n} missing_rate={args.rate} repeat={args.repeat}")
    for name, job in jobs.items():
        ref = job("python")
        got = job("cython")
        err = float(np.max(np.abs(ref - got)))
        t_py = _time(lambda: job("python"), args.repeat)
        t_cy = _time(lambda: job("cython"), args.repeat)
        print(f"{name:22s} python {t_py * 1e3:9.3f} ms   cython {t_cy * 1e3:9.3f} ms   "
              f"speed-up {t_py / t_cy:6.1f}x   max|diff| {err:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
