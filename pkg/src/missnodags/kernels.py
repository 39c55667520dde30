"""Backend selection for the row kernels.

The compiled extension is used when it was built and
``MISSNODAGS_PURE_PYTHON`` is unset; otherwise the numpy fallback.
"""
import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py
if not os.environ.get("MISSNODAGS_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

FactorizationError = (_kernels_py.FactorizationError,) + (
    (_impl.FactorizationError,) if _impl is not _kernels_py else ())


def _prep(x, observed):
    return (np.ascontiguousarray(x, dtype=np.float64),
            np.ascontiguousarray(observed, dtype=np.uint8))


def impute_rows(precision, x, observed, z, backend=None):
    impl = _pick(backend)
    x, observed = _prep(x, observed)
    return impl.impute_rows(np.ascontiguousarray(precision, dtype=np.float64), x, observed,
                            np.ascontiguousarray(z, dtype=np.float64))


def marginal_loglik_rows(cov, x, observed, backend=None):
    impl = _pick(backend)
    x, observed = _prep(x, observed)
    return impl.marginal_loglik_rows(np.ascontiguousarray(cov, dtype=np.float64), x, observed)


def _pick(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _kernels_py
    if backend == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
