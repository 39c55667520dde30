import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_spd
from missnodags import kernels

HAVE_CYTHON = True
try:
    from missnodags import _kernels  # noqa: F401
except ImportError:
    HAVE_CYTHON = False

needs_cython = pytest.mark.skipif(not HAVE_CYTHON, reason="compiled backend not built")


def _case(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 9))
    n = int(rng.integers(1, 40))
    P = random_spd(d, rng)
    x = rng.normal(size=(n, d))
    observed = rng.random((n, d)) < rng.uniform(0.2, 1.0)
    z = rng.normal(size=(n, d))
    return P, x, observed, z


@needs_cython
@given(st.integers(0, 100_000))
def test_impute_backends_agree(seed):
    P, x, observed, z = _case(seed)
    a = kernels.impute_rows(P, x, observed, z, backend="python")
    b = kernels.impute_rows(P, x, observed, z, backend="cython")
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


@needs_cython
@given(st.integers(0, 100_000))
def test_marginal_backends_agree(seed):
    P, x, observed, _ = _case(seed)
    cov = np.linalg.inv(P)
    cov = 0.5 * (cov + cov.T)
    a = kernels.marginal_loglik_rows(cov, x, observed, backend="python")
    b = kernels.marginal_loglik_rows(cov, x, observed, backend="cython")
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_marginal_matches_scipy(rng):
    from scipy.stats import multivariate_normal
    P = random_spd(4, rng)
    cov = np.linalg.inv(P)
    cov = 0.5 * (cov + cov.T)
    x = rng.normal(size=(1, 4))
    observed = np.array([[True, False, True, True]])
    idx = [0, 2, 3]
    want = multivariate_normal(np.zeros(3), cov[np.ix_(idx, idx)]).logpdf(x[0, idx])
    assert kernels.marginal_loglik_rows(cov, x, observed)[0] == pytest.approx(want)


@pytest.mark.parametrize("backend", ["python"] + (["cython"] if HAVE_CYTHON else []))
def test_indefinite_raises(backend):
    with pytest.raises(kernels.FactorizationError):
        kernels.impute_rows(-np.eye(2), np.zeros((1, 2)), np.array([[True, False]]), np.zeros((1, 2)),
                            backend=backend)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.impute_rows(np.eye(2), np.zeros((1, 2)), np.ones((1, 2), bool), np.zeros((1, 2)),
                            backend="fortran")


def test_env_var_forces_fallback():
    env = dict(os.environ, MISSNODAGS_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import missnodags; print(missnodags.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_cython
def test_compiled_backend_selected_by_default():
    assert kernels.BACKEND == "cython" or os.environ.get("MISSNODAGS_PURE_PYTHON")
