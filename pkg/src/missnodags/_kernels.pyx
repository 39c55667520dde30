# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Row-wise Gaussian kernels: conditional sampling and marginal log-density.

Each row has its own missing pattern, so the factorizations cannot be
shared by a single BLAS call; these loops run once per row per epoch.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, log

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


class FactorizationError(ArithmeticError):
    pass


def impute_rows(double[:, ::1] precision, double[:, ::1] x,
                cnp.uint8_t[:, ::1] observed, double[:, ::1] z):
    """Replace unobserved entries of each row by a conditional Gaussian draw.

    For a row with missing set O and observed set G the permuted precision
    ``P Theta P^T`` (O first) is factored as ``R^T R`` with ``R`` upper
    triangular; then ``R_OO x_O = z_O - R_OG x_G``.
    """
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t b, i, j, p, a, c, k, nm
    cdef double s, piv
    out_arr = np.array(x, dtype=np.float64, copy=True)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t[::1] perm = np.empty(d, dtype=np.intp)
    cdef double[:, ::1] R = np.zeros((d, d))
    cdef double[::1] rhs = np.empty(d)

    for b in range(n):
        nm = 0
        for i in range(d):
            if not observed[b, i]:
                perm[nm] = i
                nm += 1
        if nm == 0:
            continue
        k = nm
        for i in range(d):
            if observed[b, i]:
                perm[k] = i
                k += 1
        # first nm rows of the upper Cholesky factor of the permuted matrix
        for a in range(nm):
            s = precision[perm[a], perm[a]]
            for p in range(a):
                s -= R[p, a] * R[p, a]
            if s <= 0.0:
                raise FactorizationError("permuted precision is not positive definite")
            piv = sqrt(s)
            R[a, a] = piv
            for c in range(a + 1, d):
                s = precision[perm[a], perm[c]]
                for p in range(a):
                    s -= R[p, a] * R[p, c]
                R[a, c] = s / piv
        for a in range(nm):
            s = z[b, perm[a]]
            for c in range(nm, d):
                s -= R[a, c] * x[b, perm[c]]
            rhs[a] = s
        # back substitution with R_OO
        for a in range(nm - 1, -1, -1):
            s = rhs[a]
            for c in range(a + 1, nm):
                s -= R[a, c] * out[b, perm[c]]
            out[b, perm[a]] = s / R[a, a]
    return out_arr


def marginal_loglik_rows(double[:, ::1] cov, double[:, ::1] x,
                         cnp.uint8_t[:, ::1] observed):
    """``log N(x_G; 0, cov_GG)`` of the observed coordinates of each row."""
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t b, i, j, p, m
    cdef double s, quad, logdet
    res_arr = np.empty(n)
    cdef double[::1] res = res_arr
    cdef Py_ssize_t[::1] idx = np.empty(d, dtype=np.intp)
    cdef double[:, ::1] L = np.zeros((d, d))
    cdef double[::1] y = np.empty(d)

    for b in range(n):
        m = 0
        for i in range(d):
            if observed[b, i]:
                idx[m] = i
                m += 1
        if m == 0:
            res[b] = 0.0
            continue
        # lower Cholesky of cov[idx, idx]
        for i in range(m):
            for j in range(i + 1):
                s = cov[idx[i], idx[j]]
                for p in range(j):
                    s -= L[i, p] * L[j, p]
                if i == j:
                    if s <= 0.0:
                        raise FactorizationError("marginal covariance is not positive definite")
                    L[i, i] = sqrt(s)
                else:
                    L[i, j] = s / L[j, j]
        quad = 0.0
        logdet = 0.0
        for i in range(m):
            s = x[b, idx[i]]
            for p in range(i):
                s -= L[i, p] * y[p]
            y[i] = s / L[i, i]
            quad += y[i] * y[i]
            logdet += log(L[i, i])
        res[b] = -0.5 * quad - logdet - 0.5 * m * LOG_2PI
    return res_arr
