"""Interventional log-densities of residual-flow SEMs.

For an experiment with non-intervened indicator ``u`` the density of a
complete sample is

    log p(x) = log N(x_I; 0, I) + log N([x - f(x)]_U; 0, Theta_U^{-1})
               + log|det(I - U J_f(x))|

The log-determinant is either computed densely (``mode='exact'``), from a
fixed number of power-series terms (``'truncated'``) or with the unbiased
Russian-roulette estimator (``'russian_roulette'``), which needs only
Jacobian-vector products.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import poisson

from .functions import parameter_gradients
from .graph import ParameterError, power_iteration_norm
from .sem import Experiment

LOG_2PI = math.log(2.0 * math.pi)


class DensityError(ArithmeticError):
    """The residual map is singular at the evaluation point."""


class ContractivityWarning(RuntimeWarning):
    """The residual Jacobian is not contractive; the power series may diverge."""


@dataclass(frozen=True)
class LogDetConfig:
    mode: str = "russian_roulette"
    poisson_mean: float = 5.0
    probes: int = 1
    truncation: int = 10
    check_contractive: bool = False

    def __post_init__(self):
        if self.mode not in ("exact", "truncated", "russian_roulette"):
            raise ParameterError(f"unknown log-det mode {self.mode!r}")
        if self.poisson_mean <= 0 or self.probes < 1:
            raise ParameterError("need poisson_mean > 0 and probes >= 1")

    def term_weights(self, n_terms: int) -> np.ndarray:
        """``c_k`` for ``k = 1..n_terms``: ``1/(k P(N >= k))`` or ``1/k``."""
        if self.mode == "russian_roulette":
            return _roulette_weights(float(self.poisson_mean), int(n_terms))
        return 1.0 / np.arange(1, n_terms + 1)


@functools.lru_cache(maxsize=256)
def _roulette_weights(mean: float, n_terms: int) -> np.ndarray:
    k = np.arange(1, n_terms + 1)
    w = 1.0 / (k * poisson.sf(k - 1, mean))
    w.flags.writeable = False
    return w


@dataclass
class Draws:
    """Frozen randomness for one evaluation of the objective."""

    mask_noise: np.ndarray | None
    probes: np.ndarray | None = None      # (p, n, d)
    n_terms: np.ndarray | None = None     # (p,)
    hard: bool = True
    extra: dict = field(default_factory=dict)


def draw_logdet(config: LogDetConfig, n: int, d: int, rng: np.random.Generator):
    """Probe vectors and series cut-offs for a batch of ``n`` rows."""
    if config.mode == "exact":
        return None, None
    W = rng.standard_normal((config.probes, n, d))
    if config.mode == "russian_roulette":
        n_terms = rng.poisson(config.poisson_mean, size=config.probes)
    else:
        n_terms = np.full(config.probes, config.truncation)
    return W, n_terms


def _series(apply_A, apply_AT, W, n_terms, weights, want_grad):
    """Per-row ``-sum_k c_k w^T A^k w`` and, optionally, its gradient in ``A``.

    ``apply_A``/``apply_AT`` act row-wise on ``(n, d)`` arrays.
    """
    n, d = W.shape
    if n_terms == 0:
        return np.zeros(n), (np.zeros((n, d, d)) if want_grad else None)
    V = [W]
    for _ in range(n_terms):
        V.append(apply_A(V[-1]))
    est = np.zeros(n)
    for k in range(1, n_terms + 1):
        est -= weights[k - 1] * np.einsum("bi,bi->b", W, V[k])
    if not want_grad:
        return est, None
    # d/dA w^T A^k w = sum_{m+j=k-1} (A^T)^m w (A^j w)^T
    G = np.zeros((n, d, d))
    Ut = W
    for m in range(n_terms):
        Y = np.zeros((n, d))
        for j in range(n_terms - m):
            Y += weights[m + j] * V[j]
        G -= Ut[:, :, None] * Y[:, None, :]
        if m + 1 < n_terms:
            Ut = apply_AT(Ut)
    return est, G


def logdet_from_cache(f, cache, experiment: Experiment, config: LogDetConfig,
                      W=None, n_terms=None, want_grad=False):
    """Per-row ``log|det(I - U J_f(x))|`` and the gradient in ``A = U J_f``.

    Returns ``(values (n,), G_A (n, d, d) or None)``.
    """
    u = experiment.u
    n, d = cache.X.shape
    if config.mode == "exact":
        JT = f.jacobian_T(cache)
        A = np.swapaxes(JT, 1, 2) * u[None, :, None]
        Imat = np.eye(d)[None] - A
        sign, logdet = np.linalg.slogdet(Imat)
        if np.any(sign == 0) or not np.all(np.isfinite(logdet)):
            raise DensityError("I - U J_f is singular")
        G = None
        if want_grad:
            G = -np.swapaxes(np.linalg.inv(Imat), 1, 2)
        return logdet, G

    def apply_A(V):
        return u * f.jvp(cache, V)

    def apply_AT(C):
        return f.vjp(cache, u * C)

    if config.check_contractive:
        row = lambda fn: (lambda v: fn(np.broadcast_to(v, (n, d)))[0])
        est_norm = power_iteration_norm(row(apply_A), row(apply_AT), d)
        if est_norm >= 1.0:
            warnings.warn(f"residual Jacobian norm estimate {est_norm:.4f} >= 1",
                          ContractivityWarning, stacklevel=2)

    total = np.zeros(n)
    G_total = np.zeros((n, d, d)) if want_grad else None
    p = W.shape[0]
    for probe in range(p):
        k = int(n_terms[probe])
        weights = config.term_weights(k)
        est, G = _series(apply_A, apply_AT, W[probe], k, weights, want_grad)
        total += est / p
        if want_grad:
            G_total += G / p
    return total, G_total


def exact_log_abs_det(f, x, experiment: Experiment, mask) -> float:
    """``log|det(I - U J_f(x))|`` by dense LU."""
    _, cache = f.forward(np.atleast_2d(np.asarray(x, float)), np.asarray(mask, float))
    vals, _ = logdet_from_cache(f, cache, experiment, LogDetConfig(mode="exact"))
    return float(vals[0])


def estimate_log_abs_det(f, x, experiment: Experiment, mask, config: LogDetConfig,
                         rng: np.random.Generator) -> float:
    """Stochastic power-series estimate of ``log|det(I - U J_f(x))|``."""
    X = np.atleast_2d(np.asarray(x, float))
    _, cache = f.forward(X, np.asarray(mask, float))
    W, n_terms = draw_logdet(config, X.shape[0], X.shape[1], rng)
    vals, _ = logdet_from_cache(f, cache, experiment, config, W, n_terms)
    return float(vals[0]) if np.ndim(x) == 1 else vals


def _gaussian_terms(X, F, experiment, log_var):
    """Row-wise log-density excluding the log-det, plus its output/variance grads."""
    u = experiment.u
    theta = np.exp(-log_var)
    R = X - F
    obs = u * (-0.5 * theta * R * R - 0.5 * log_var - 0.5 * LOG_2PI)
    intv = (1.0 - u) * (-0.5 * X * X - 0.5 * LOG_2PI)
    logp = obs.sum(axis=1) + intv.sum(axis=1)
    g_f = u * theta * R
    g_logvar = u * (0.5 * theta * R * R - 0.5)
    return logp, g_f, g_logvar


def batch_log_density(model, X, experiment: Experiment, mask, config: LogDetConfig,
                      W=None, n_terms=None) -> np.ndarray:
    """Per-row interventional log-densities of complete samples ``X``."""
    F, cache = model.f.forward(X, mask)
    logp, _, _ = _gaussian_terms(X, F, experiment, model.noise.log_var)
    logdet, _ = logdet_from_cache(model.f, cache, experiment, config, W, n_terms)
    return logp + logdet


def interventional_log_density(model, x, experiment: Experiment, mask,
                               config: LogDetConfig, rng: np.random.Generator | None = None) -> float:
    """Log-density of one complete sample under ``experiment``."""
    X = np.atleast_2d(np.asarray(x, float))
    if rng is None:
        rng = np.random.default_rng(0)
    W, n_terms = draw_logdet(config, 1, X.shape[1], rng)
    return float(batch_log_density(model, X, experiment, np.asarray(mask, float), config, W, n_terms)[0])


def draw_randomness(model, n: int, config: LogDetConfig, rng: np.random.Generator,
                    hard: bool = True) -> Draws:
    noise = model.mask.draw_noise(rng)
    W, n_terms = draw_logdet(config, n, model.d, rng)
    return Draws(noise, W, n_terms, hard)


def objective_and_grad(model, X, experiment: Experiment, config: LogDetConfig,
                       draws: Draws, lam: float, want_grad: bool = True):
    """Penalized Monte-Carlo objective for one batch sharing ``experiment``.

    ``mean_b log p(x_b) - lam * sum_{j != i} sigmoid(phi[j, i])`` with the
    mask, probes and cut-offs taken from ``draws``.

    Returns
    -------
    (float, dict or None)
        Objective value and gradients keyed like ``model.params()``.
    """
    X = np.asarray(X, float)
    n = X.shape[0]
    if n == 0:
        raise ParameterError("empty batch")
    if draws.probes is not None and draws.probes.shape[1:] != X.shape:
        raise ParameterError("probe vectors do not match the batch shape")
    M, soft = model.mask.relax(draws.mask_noise, draws.hard)
    F, cache = model.f.forward(X, M)
    logp, g_f, g_logvar = _gaussian_terms(X, F, experiment, model.noise.log_var)
    logdet, G_A = logdet_from_cache(model.f, cache, experiment, config,
                                    draws.probes, draws.n_terms, want_grad)
    probs = model.mask.probabilities()
    value = float(np.mean(logp + logdet) - lam * probs.sum())
    if not want_grad:
        return value, None

    u = experiment.u
    # A = U J  ->  dJ^T[b, j, i] = u_i G_A[b, i, j]
    G_JT = np.swapaxes(G_A, 1, 2) * u[None, None, :]
    fgrads, dM = parameter_gradients(model.f, cache, g_f / n, G_JT / n)
    grads = dict(fgrads)
    dphi = model.mask.logit_grad(dM, soft)
    dphi -= lam * probs * (1.0 - probs)
    np.fill_diagonal(dphi, 0.0)
    grads["phi"] = dphi
    grads["log_var"] = g_logvar.sum(axis=0) / n
    return value, grads


def expected_objective(model, X, experiment: Experiment, config: LogDetConfig,
                       rng: np.random.Generator, lam: float = 0.0, hard: bool = True,
                       want_grad: bool = False):
    """Draw fresh randomness and evaluate :func:`objective_and_grad`."""
    draws = draw_randomness(model, np.shape(X)[0], config, rng, hard)
    return objective_and_grad(model, X, experiment, config, draws, lam, want_grad)
