"""E-step imputation of missing nodes.

Under a linear Gaussian SEM (or its first-order expansion at the origin) a
sample of experiment ``(I, U)`` is ``N(0, Theta_X^{-1})`` with

    Theta_X = (I - B U) (U Theta + I - U) (I - U B^T),

the intervened coordinates being standard normal. Missing coordinates are
drawn from their Gaussian conditional by factoring the permuted precision and
solving one triangular system per row.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular

from . import kernels
from .functions import jacobian
from .sem import Experiment, InterventionalDataset

log = logging.getLogger(__name__)

FactorizationError = kernels.FactorizationError


def build_interventional_precision(B: np.ndarray, theta: np.ndarray,
                                   experiment: Experiment) -> np.ndarray:
    """Precision of ``x`` under ``x = U B^T x + U e + c`` with ``c_I ~ N(0, I)``.

    Parameters
    ----------
    B : (d, d) weighted adjacency (``B[j, i]`` weights ``j -> i``).
    theta : (d,) noise precisions ``1 / sigma_i^2``.
    """
    u = experiment.u
    d = len(u)
    A = np.eye(d) - u[:, None] * B.T          # I - U B^T
    D = u * np.asarray(theta, float) + (1.0 - u)
    P = A.T @ (D[:, None] * A)
    return 0.5 * (P + P.T)


@dataclass
class PrecisionFactorization:
    """Permuted precision ``P Theta_X P^T = R^T R`` with missing nodes first."""

    precision: np.ndarray
    perm: np.ndarray
    factor: np.ndarray
    n_missing: int

    @classmethod
    def build(cls, precision: np.ndarray, missing: np.ndarray) -> "PrecisionFactorization":
        missing = np.asarray(missing, dtype=int)
        observed = np.setdiff1d(np.arange(precision.shape[0]), missing)
        perm = np.concatenate([missing, observed])
        try:
            R = cholesky(precision[np.ix_(perm, perm)], lower=False)
        except LinAlgError as exc:
            raise kernels._kernels_py.FactorizationError(str(exc)) from exc
        return cls(precision, perm, R, len(missing))

    def conditional_moments(self, x_obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and covariance of the missing block given observed values.

        ``x_obs`` is ordered like the observed part of ``perm``.
        """
        k = self.n_missing
        R_mm = self.factor[:k, :k]
        mean = solve_triangular(R_mm, -self.factor[:k, k:] @ x_obs, lower=False)
        R_inv = solve_triangular(R_mm, np.eye(k), lower=False)
        return mean, R_inv @ R_inv.T


def impute_gaussian_batch(x: np.ndarray, mask: np.ndarray, precision: np.ndarray,
                          rng: np.random.Generator, backend: str | None = None) -> np.ndarray:
    """One conditional draw of every missing entry; observed entries pass through.

    All rows must come from the experiment ``precision`` was built for.
    ``x`` may hold anything (NaN included) at missing positions.
    """
    x = np.asarray(x, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    z = rng.standard_normal(x.shape)
    if mask.all():
        return x.copy()
    x_in = np.where(mask, x, 0.0)
    out = kernels.impute_rows(precision, x_in, mask, z, backend=backend)
    out[mask] = x[mask]
    return out


def linearization_matrix(f, mask: np.ndarray) -> np.ndarray:
    """Jacobian of ``f`` at the origin, ``J[i, j] = df_i/dx_j (0)``.

    Its transpose plays the role of ``B`` when imputing under a nonlinear model.
    """
    return jacobian(f, np.zeros(f.d), mask)


def model_precision(model, experiment: Experiment) -> np.ndarray:
    """Interventional precision of the (linearized) model under the expected mask."""
    return build_interventional_precision(model.adjacency(), model.noise.theta, experiment)


def impute_dataset(model, data: InterventionalDataset, rng: np.random.Generator,
                   backend: str | None = None) -> np.ndarray:
    """Complete copy of ``data.x`` with missing entries drawn from the model."""
    out = np.where(data.mask, data.x, 0.0)
    if data.mask.all():
        return out
    for experiment, rows in data.regimes().items():
        sub_mask = data.mask[rows]
        if sub_mask.all():
            continue
        precision = model_precision(model, experiment)
        out[rows] = impute_gaussian_batch(out[rows], sub_mask, precision, rng, backend)
    return out


def mean_impute(data: InterventionalDataset) -> np.ndarray:
    """Fill each missing entry with the mean of the observed values of its node.

    Means are taken within the rows of the same experiment. A node with no
    observed value in an experiment is filled with 0 and a warning is logged.
    """
    out = np.where(data.mask, data.x, 0.0)
    for experiment, rows in data.regimes().items():
        m = data.mask[rows]
        counts = m.sum(axis=0)
        sums = np.where(m, data.x[rows], 0.0).sum(axis=0)
        means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            log.warning("nodes %s never observed in experiment %s; imputing 0",
                        empty.tolist(), experiment.intervened)
        block = out[rows]
        block[~m] = np.broadcast_to(means, m.shape)[~m]
        out[rows] = block
    return out
