"""Pure numpy/scipy versions of the row kernels.

Rows sharing a missing pattern are processed together, so one factorization
serves the whole group.
"""
import math

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

LOG_2PI = math.log(2.0 * math.pi)


class FactorizationError(ArithmeticError):
    pass


def _pattern_groups(observed):
    patterns, inverse = np.unique(observed, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    for k, pattern in enumerate(patterns):
        yield pattern.astype(bool), np.flatnonzero(inverse == k)


def impute_rows(precision, x, observed, z):
    out = np.array(x, dtype=float, copy=True)
    for pattern, rows in _pattern_groups(observed):
        miss = np.flatnonzero(~pattern)
        if miss.size == 0:
            continue
        obs = np.flatnonzero(pattern)
        perm = np.concatenate([miss, obs])
        try:
            R = cholesky(precision[np.ix_(perm, perm)], lower=False)
        except LinAlgError as exc:
            raise FactorizationError("permuted precision is not positive definite") from exc
        k = miss.size
        rhs = z[np.ix_(rows, miss)].T - R[:k, k:] @ x[np.ix_(rows, obs)].T
        out[np.ix_(rows, miss)] = solve_triangular(R[:k, :k], rhs, lower=False).T
    return out


def marginal_loglik_rows(cov, x, observed):
    res = np.zeros(x.shape[0])
    for pattern, rows in _pattern_groups(observed):
        obs = np.flatnonzero(pattern)
        if obs.size == 0:
            continue
        try:
            L = cholesky(cov[np.ix_(obs, obs)], lower=True)
        except LinAlgError as exc:
            raise FactorizationError("marginal covariance is not positive definite") from exc
        Y = solve_triangular(L, x[np.ix_(rows, obs)].T, lower=True)
        res[rows] = (-0.5 * np.sum(Y * Y, axis=0) - np.sum(np.log(np.diag(L)))
                     - 0.5 * obs.size * LOG_2PI)
    return res
