"""Contractive causal functions with an explicit dependency mask.

Two families are supported, both evaluated on a batch ``X`` of shape
``(n, d)`` under one ``(d, d)`` mask ``M`` (``M[j, i]`` gates the input
``x_j`` of output ``i``):

* :class:`LinearFunction` -- ``f(x) = (B * M).T @ x``
* :class:`MaskedMlpFunction` -- ``f_i(x) = sum_k W2[k, i] tanh(sum_j W1[j, k] M[j, i] x_j)``

Every family exposes Jacobian-vector products, vector-Jacobian products and
reverse-mode parameter gradients, so the log-determinant estimator never
needs a dense Jacobian.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import spectral_norm


class ContractError(RuntimeError):
    """Backward pass called with state that does not match the forward pass."""


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class FunctionCache:
    """Forward-pass state reused by jvp/vjp/backward."""

    X: np.ndarray
    M: np.ndarray
    extra: dict


class LinearFunction:
    kind = "linear"

    def __init__(self, B: np.ndarray):
        self.B = np.array(B, dtype=float)
        np.fill_diagonal(self.B, 0.0)

    @property
    def d(self) -> int:
        return self.B.shape[0]

    @property
    def hidden(self) -> int:
        return 0

    def params(self) -> dict[str, np.ndarray]:
        return {"B": self.B}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        self.B = np.array(params["B"], dtype=float)
        np.fill_diagonal(self.B, 0.0)

    def copy(self) -> "LinearFunction":
        return LinearFunction(self.B.copy())

    def forward(self, X: np.ndarray, M: np.ndarray) -> tuple[np.ndarray, FunctionCache]:
        Beff = self.B * M
        return X @ Beff, FunctionCache(X, M, {"Beff": Beff})

    def jvp(self, cache: FunctionCache, V: np.ndarray) -> np.ndarray:
        return V @ cache.extra["Beff"]

    def vjp(self, cache: FunctionCache, C: np.ndarray) -> np.ndarray:
        return C @ cache.extra["Beff"].T

    def jacobian_T(self, cache: FunctionCache) -> np.ndarray:
        """Per-row transposed Jacobians, shape ``(n, d, d)``; ``JT[b, j, i] = df_i/dx_j``."""
        n = cache.X.shape[0]
        return np.broadcast_to(cache.extra["Beff"], (n, self.d, self.d))

    def backward(self, cache, g_f=None, G_JT=None):
        dBeff = np.zeros_like(self.B)
        if g_f is not None:
            dBeff += cache.X.T @ g_f
        if G_JT is not None:
            dBeff += G_JT.sum(axis=0)
        dB = dBeff * cache.M
        np.fill_diagonal(dB, 0.0)
        return {"B": dB}, dBeff * self.B

    def weight_norms(self) -> list[float]:
        return [spectral_norm(self.B)]

    def project(self, budget: float) -> float:
        """Scale ``B`` into the spectral ball; returns the resulting norm."""
        norm = spectral_norm(self.B)
        if norm > budget:
            self.B *= budget / norm
            return budget
        return norm

    def linear_map(self, M: np.ndarray) -> np.ndarray:
        """Weighted adjacency of the first-order expansion at the origin."""
        return self.B * M


class MaskedMlpFunction:
    """One-hidden-layer tanh network applied per output to a masked input."""

    kind = "mlp"

    def __init__(self, W1: np.ndarray, W2: np.ndarray):
        self.W1 = np.array(W1, dtype=float)
        self.W2 = np.array(W2, dtype=float)
        if self.W1.shape[1] != self.W2.shape[0] or self.W1.shape[0] != self.W2.shape[1]:
            raise ValueError("W1 must be (d, h) and W2 (h, d)")

    @property
    def d(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def params(self) -> dict[str, np.ndarray]:
        return {"W1": self.W1, "W2": self.W2}

    def set_params(self, params):
        self.W1 = np.array(params["W1"], dtype=float)
        self.W2 = np.array(params["W2"], dtype=float)

    def copy(self) -> "MaskedMlpFunction":
        return MaskedMlpFunction(self.W1.copy(), self.W2.copy())

    def _pre(self, X, M):
        # P[b, k, i] = sum_j W1[j, k] M[j, i] X[b, j]
        return np.einsum("jk,bji->bki", self.W1, X[:, :, None] * M[None], optimize=True)

    def forward(self, X, M):
        H = np.tanh(self._pre(X, M))
        S = 1.0 - H * H
        F = np.einsum("bki,ki->bi", H, self.W2)
        return F, FunctionCache(X, M, {"H": H, "S": S, "Q": S * self.W2[None]})

    def jvp(self, cache, V):
        Pv = self._pre(V, cache.M)
        return np.einsum("bki,bki->bi", cache.extra["Q"], Pv)

    def vjp(self, cache, C):
        T = cache.extra["Q"] * C[:, None, :]
        R = np.einsum("jk,bki->bji", self.W1, T, optimize=True)
        return np.einsum("bji,ji->bj", R, cache.M)

    def jacobian_T(self, cache):
        raw = np.einsum("jk,bki->bji", self.W1, cache.extra["Q"], optimize=True)
        return raw * cache.M[None]

    def backward(self, cache, g_f=None, G_JT=None):
        X, M = cache.X, cache.M
        H, S, Q = cache.extra["H"], cache.extra["S"], cache.extra["Q"]
        dW1 = np.zeros_like(self.W1)
        dW2 = np.zeros_like(self.W2)
        dM = np.zeros_like(M)
        dP = np.zeros_like(H)
        if g_f is not None:
            dW2 += np.einsum("bi,bki->ki", g_f, H)
            dP += g_f[:, None, :] * self.W2[None] * S
        if G_JT is not None:
            raw = np.einsum("jk,bki->bji", self.W1, Q, optimize=True)
            dM += np.einsum("bji,bji->ji", G_JT, raw)
            R = G_JT * M[None]
            dW1 += np.einsum("bji,bki->jk", R, Q, optimize=True)
            dQ = np.einsum("jk,bji->bki", self.W1, R, optimize=True)
            dW2 += np.einsum("bki,bki->ki", dQ, S)
            dS = dQ * self.W2[None]
            dP += -2.0 * H * dS * S
        if g_f is not None or G_JT is not None:
            XdP = np.einsum("bj,bki->jki", X, dP, optimize=True)
            dW1 += np.einsum("jki,ji->jk", XdP, M)
            dM += np.einsum("jki,jk->ji", XdP, self.W1)
        return {"W1": dW1, "W2": dW2}, dM

    def weight_norms(self) -> list[float]:
        return [spectral_norm(self.W1), spectral_norm(self.W2)]

    def project(self, budget: float) -> float:
        per_layer = budget ** 0.5
        bound = 1.0
        for W in (self.W1, self.W2):
            norm = spectral_norm(W)
            if norm > per_layer:
                W *= per_layer / norm
                norm = per_layer
            bound *= norm
        return bound

    def linear_map(self, M):
        # J_f(0).T: tanh'(0) = 1
        return (self.W1 @ self.W2) * M


def evaluate(f, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``f(x)`` for a single vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    F, _ = f.forward(np.atleast_2d(x), np.asarray(mask, dtype=float))
    return F[0] if x.ndim == 1 else F


def jacobian(f, x: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Dense Jacobian ``J[i, j] = d f_i / d x_j`` at a single point."""
    _, cache = f.forward(np.atleast_2d(np.asarray(x, float)), np.asarray(mask, float))
    return np.array(f.jacobian_T(cache)[0].T)


def lipschitz_bound(f) -> float:
    """Product of layer spectral norms (Lipschitz bound of the unmasked map)."""
    return float(np.prod(f.weight_norms()))


def spectral_project(f, lipschitz_budget: float):
    """Rescale weights so the layer-norm product is at most ``lipschitz_budget``."""
    f.project(lipschitz_budget)
    return f


@dataclass
class MaskDistribution:
    """Independent binary-concrete edges with logits ``phi``."""

    phi: np.ndarray
    temperature: float = 1.0

    def __post_init__(self):
        self.phi = np.array(self.phi, dtype=float)

    @property
    def d(self) -> int:
        return self.phi.shape[0]

    def probabilities(self) -> np.ndarray:
        P = _sigmoid(self.phi)
        np.fill_diagonal(P, 0.0)
        return P

    def draw_noise(self, rng: np.random.Generator) -> np.ndarray:
        u = rng.random((self.d, self.d))
        u = np.clip(u, 1e-12, 1.0 - 1e-12)
        return np.log(u) - np.log1p(-u)

    def relax(self, noise: np.ndarray, hard: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Forward mask value and the relaxed sample carrying the gradient."""
        soft = _sigmoid((self.phi + noise) / self.temperature)
        np.fill_diagonal(soft, 0.0)
        value = (soft > 0.5).astype(float) if hard else soft
        return value, soft

    def logit_grad(self, dM: np.ndarray, soft: np.ndarray) -> np.ndarray:
        """Chain ``dL/dM`` through the (straight-through) relaxation to ``phi``."""
        g = dM * soft * (1.0 - soft) / self.temperature
        np.fill_diagonal(g, 0.0)
        return g


def sample_mask(dist: MaskDistribution, hard: bool, rng: np.random.Generator) -> np.ndarray:
    value, _ = dist.relax(dist.draw_noise(rng), hard)
    return value


@dataclass
class NoisePrecision:
    """Diagonal noise precision ``exp(-log_var)``."""

    log_var: np.ndarray

    def __post_init__(self):
        self.log_var = np.array(self.log_var, dtype=float)

    @property
    def theta(self) -> np.ndarray:
        return np.exp(-self.log_var)


def parameter_gradients(f, cache: FunctionCache, g_f=None, G_JT=None):
    """Reverse-mode gradients of a scalar loss through ``f``.

    Parameters
    ----------
    cache : state returned by ``f.forward`` for the same batch and mask.
    g_f : (n, d) upstream gradient with respect to the outputs ``f(X)``.
    G_JT : (n, d, d) upstream gradient with respect to the transposed
        per-row Jacobians.

    Returns
    -------
    (dict, ndarray)
        Gradients of the function weights and of the mask values.
    """
    n, d = cache.X.shape
    if g_f is not None and np.shape(g_f) != (n, d):
        raise ContractError(f"upstream output gradient has shape {np.shape(g_f)}, forward batch is {(n, d)}")
    if G_JT is not None and np.shape(G_JT) != (n, d, d):
        raise ContractError(f"upstream Jacobian gradient has shape {np.shape(G_JT)}, expected {(n, d, d)}")
    if cache.M.shape != (d, d):
        raise ContractError("mask in cache does not match the batch dimension")
    return f.backward(cache, g_f, G_JT)
