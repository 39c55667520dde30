"""Shared builders and oracles for the test-suite."""
import numpy as np

from missnodags.functions import LinearFunction, MaskDistribution, MaskedMlpFunction, NoisePrecision
from missnodags.graph import project_spectral
from missnodags.likelihood import LogDetConfig, draw_randomness, objective_and_grad
from missnodags.model import CausalModel
from missnodags.sem import Experiment


def random_model(d, kind, rng, hidden=None, budget=0.9, scale=0.6):
    """Contractive model with non-trivial weights, logits and noise levels."""
    if kind == "linear":
        f = LinearFunction(rng.uniform(-scale, scale, (d, d)))
    else:
        h = hidden or d
        f = MaskedMlpFunction(rng.uniform(-scale, scale, (d, h)), rng.uniform(-scale, scale, (h, d)))
    f.project(budget)
    phi = rng.normal(0, 1.5, (d, d))
    np.fill_diagonal(phi, 0)
    return CausalModel(f, MaskDistribution(phi, rng.uniform(0.5, 2.0)),
                       NoisePrecision(rng.normal(-1, 0.5, d)), budget)


def random_experiment(d, rng):
    k = rng.integers(0, d)
    return Experiment(d, tuple(rng.choice(d, size=k, replace=False)))


def random_linear_contraction(d, rng, bound=0.9, density=0.5):
    B = rng.uniform(-1, 1, (d, d)) * (rng.random((d, d)) < density)
    np.fill_diagonal(B, 0)
    return project_spectral(B, bound)


def random_spd(d, rng):
    A = rng.standard_normal((d, d))
    return A @ A.T + 0.5 * np.eye(d)


def schur_conditional(precision, miss, obs, x_obs):
    """Dense conditional of ``x_miss | x_obs`` from the joint covariance."""
    cov = np.linalg.inv(precision)
    S_mo = cov[np.ix_(miss, obs)]
    S_oo = cov[np.ix_(obs, obs)]
    mean = S_mo @ np.linalg.solve(S_oo, x_obs) if len(obs) else np.zeros(len(miss))
    C = cov[np.ix_(miss, miss)] - (S_mo @ np.linalg.solve(S_oo, S_mo.T) if len(obs) else 0)
    return mean, C


def finite_difference_errors(model, X, experiment, config, draws, lam, h=1e-6, skip=()):
    """Relative error of every analytic gradient against central differences.

    Randomness (mask noise, probes, cut-offs) is frozen in ``draws``.
    """
    _, grads = objective_and_grad(model, X, experiment, config, draws, lam)
    base = {k: v.copy() for k, v in model.params().items()}
    errors = {}
    for name, value in base.items():
        if name in skip:
            continue
        fd = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            for sign in (1, -1):
                p = {k: v.copy() for k, v in base.items()}
                p[name][idx] += sign * h
                model.set_params(p)
                fd[idx] += sign * objective_and_grad(model, X, experiment, config, draws, lam,
                                                     want_grad=False)[0]
            fd[idx] /= 2 * h
        model.set_params(base)
        g = grads[name]
        if name == "phi":
            np.fill_diagonal(fd, 0.0)
        scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-6)
        errors[name] = float(np.linalg.norm(g - fd) / scale)
    return errors


def gradient_case(seed):
    """One random configuration for the gradient check: model, batch and frozen draws."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 7))
    kind = "linear" if seed % 2 == 0 else "mlp"
    model = random_model(d, kind, rng, hidden=int(rng.integers(2, 5)))
    experiment = random_experiment(d, rng)
    X = rng.standard_normal((int(rng.integers(1, 5)), d))
    mode = ("russian_roulette", "truncated", "exact")[seed % 3]
    config = LogDetConfig(mode=mode, poisson_mean=3.0, probes=int(rng.integers(1, 3)), truncation=4)
    hard = bool(seed % 4 < 2)
    draws = draw_randomness(model, X.shape[0], config, rng, hard)
    lam = float(rng.uniform(0, 0.5))
    return model, X, experiment, config, draws, lam, hard
