"""Directed graph structures, random graph generation and recovery metrics.

Adjacency convention throughout the package: ``A[j, i] != 0`` encodes the
edge ``j -> i``. With a weighted adjacency ``B`` the linear SEM reads
``x = B.T @ x + e``.
"""
from __future__ import annotations

import numpy as np


class ParameterError(ValueError):
    """Invalid argument to a numerical routine."""


def spectral_norm(A: np.ndarray) -> float:
    """Largest singular value of ``A`` (exact, via LAPACK)."""
    A = np.asarray(A, dtype=float)
    if A.size == 0 or not np.any(A):
        return 0.0
    return float(np.linalg.norm(A, 2))


def power_iteration_norm(matvec, rmatvec, n: int, n_iter: int = 100,
                         tol: float = 1e-8) -> float:
    """Estimate ``||A||_2`` from products with ``A`` and ``A.T`` only.

    Used where the operator is never materialized. Starts from a fixed
    vector, so the estimate is deterministic.
    """
    v = np.linspace(1.0, 2.0, n)
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(n_iter):
        w = rmatvec(matvec(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new_sigma = np.sqrt(nw)
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            return float(new_sigma)
        sigma = new_sigma
    return float(sigma)


def sample_erdos_renyi(d: int, expected_density: float,
                       rng: np.random.Generator) -> np.ndarray:
    """Random directed graph with independent edges.

    Every ordered pair ``(j, i)``, ``j != i``, is an edge with probability
    ``expected_density / (d - 1)``, so each node has expected out-degree
    ``expected_density``. Cycles and two-cycles are allowed.

    Returns
    -------
    np.ndarray
        ``(d, d)`` integer 0/1 matrix with zero diagonal.
    """
    if d < 2:
        raise ParameterError(f"need at least two nodes, got d={d}")
    if expected_density <= 0 or expected_density * d > d * (d - 1):
        raise ParameterError(
            f"expected_density={expected_density} impossible for d={d}")
    p = expected_density / (d - 1)
    edges = (rng.random((d, d)) < p).astype(np.int64)
    np.fill_diagonal(edges, 0)
    return edges


def assign_weights_and_project(structure: np.ndarray, band_low: float,
                               band_high: float, target_lipschitz: float,
                               rng: np.random.Generator) -> np.ndarray:
    """Draw edge weights from ``±U(band_low, band_high)`` and rescale to a contraction.

    After drawing, ``B`` is multiplied by ``target_lipschitz / ||B||_2``
    whenever its spectral norm exceeds ``target_lipschitz``.
    """
    if not 0 < band_low < band_high:
        raise ParameterError("weight band must satisfy 0 < low < high")
    if target_lipschitz <= 0:
        raise ParameterError("target_lipschitz must be positive")
    structure = np.asarray(structure)
    d = structure.shape[0]
    mag = rng.uniform(band_low, band_high, size=(d, d))
    sign = np.where(rng.random((d, d)) < 0.5, -1.0, 1.0)
    B = np.where(structure != 0, sign * mag, 0.0)
    np.fill_diagonal(B, 0.0)
    return project_spectral(B, target_lipschitz)


def project_spectral(B: np.ndarray, bound: float) -> np.ndarray:
    """Scale ``B`` onto the spectral-norm ball of radius ``bound`` (no-op inside it)."""
    norm = spectral_norm(B)
    if norm > bound:
        return B * (bound / norm)
    return B.copy()


def shd(estimated: np.ndarray, truth: np.ndarray) -> int:
    """Structural Hamming distance between two directed graphs.

    Each unordered node pair contributes at most 1: a missing or extra edge
    costs 1, and an edge pointing the wrong way costs 1 (a reversal). Pairs
    carrying a two-cycle in one graph and a single edge in the other also
    cost 1.
    """
    est = np.asarray(estimated) != 0
    tru = np.asarray(truth) != 0
    if est.shape != tru.shape or est.ndim != 2 or est.shape[0] != est.shape[1]:
        raise ParameterError(
            f"graph shapes differ: {est.shape} vs {tru.shape}")
    est = est & ~np.eye(est.shape[0], dtype=bool)
    tru = tru & ~np.eye(tru.shape[0], dtype=bool)
    iu = np.triu_indices(est.shape[0], k=1)
    # state of each unordered pair: (forward edge, backward edge)
    e_state = est[iu] * 1 + est.T[iu] * 2
    t_state = tru[iu] * 1 + tru.T[iu] * 2
    return int(np.count_nonzero(e_state != t_state))


def extract_structure(mask_probabilities: np.ndarray,
                      threshold: float = 0.5) -> np.ndarray:
    """Edge set ``{(j, i): p[j, i] > threshold}`` with the diagonal cleared."""
    P = np.asarray(mask_probabilities, dtype=float)
    G = (P > threshold).astype(np.int64)
    np.fill_diagonal(G, 0)
    return G


def edge_list(B: np.ndarray) -> list[tuple[int, int, float]]:
    """Non-zero entries of ``B`` as ``(src, dst, weight)`` in row-major order."""
    src, dst = np.nonzero(B)
    return [(int(j), int(i), float(B[j, i])) for j, i in zip(src, dst)]
