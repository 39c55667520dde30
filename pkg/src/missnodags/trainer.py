"""Penalized stochastic EM for cyclic causal models with missing values."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .graph import ParameterError, shd
from .imputer import impute_dataset, mean_impute, model_precision
from .likelihood import LogDetConfig, batch_log_density, draw_randomness, objective_and_grad
from .model import CausalModel
from .sem import InterventionalDataset

log = logging.getLogger(__name__)

METHODS = ("missnodags", "mean_impute_then_learn", "clean")


class NumericalError(ArithmeticError):
    """Training produced non-finite values."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-2
    lam: float = 1e-2
    lipschitz_budget: float = 0.9
    kind: str = "linear"
    hidden: int | None = None
    temperature: float = 1.0
    hard_mask: bool = True
    logdet: LogDetConfig = field(default_factory=LogDetConfig)
    threshold: float = 0.5
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_scale: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be non-negative")
        if self.lam < 0:
            raise ParameterError("lam must be non-negative")
        if not 0 < self.lipschitz_budget < 1:
            raise ParameterError("lipschitz_budget must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ParameterError("batch_size must be positive and epochs non-negative")


@dataclass
class EpochRecord:
    epoch: int
    observed_loglik: float
    observed_loglik_se: float
    q_value: float
    shd: float
    wall_time_s: float
    max_lipschitz: float


@dataclass
class RunMetrics:
    records: list[EpochRecord] = field(default_factory=list)
    structure: np.ndarray | None = None
    test_nll: float = float("nan")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)


class Adam:
    """Adam for gradient *ascent* on a dict of arrays."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
        self.t += 1
        out = {}
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.m.get(k, np.zeros_like(p))
            v = self.v.get(k, np.zeros_like(p))
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * g * g
            self.m[k], self.v[k] = m, v
            out[k] = p + self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return out


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def e_step(model: CausalModel, data: InterventionalDataset, seed: int, epoch: int) -> np.ndarray:
    """Complete copy of the data with missing entries drawn under ``model``.

    Deterministic in ``(model, seed, epoch)``.
    """
    return impute_dataset(model, data, _rng(seed, epoch, 0))


def make_batches(data: InterventionalDataset, batch_size: int, rng: np.random.Generator):
    """Shuffled mini-batches, each drawn from a single experiment."""
    batches = []
    for experiment, rows in data.regimes().items():
        rows = rng.permutation(rows)
        for start in range(0, len(rows), batch_size):
            batches.append((experiment, rows[start:start + batch_size]))
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def effective_lipschitz(model: CausalModel) -> float:
    """Spectral norm of ``B`` (linear) or layer-norm product (MLP)."""
    return float(np.prod(model.f.weight_norms()))


def m_step(model: CausalModel, X: np.ndarray, data: InterventionalDataset,
           config: TrainConfig, optimizer: Adam, rng: np.random.Generator):
    """One pass of mini-batch ascent over the completed data ``X``.

    Returns the epoch-mean objective and the largest post-step Lipschitz bound.
    """
    values = []
    max_lip = effective_lipschitz(model)
    for experiment, rows in make_batches(data, config.batch_size, rng):
        Xb = X[rows]
        draws = draw_randomness(model, len(rows), config.logdet, rng, config.hard_mask)
        value, grads = objective_and_grad(model, Xb, experiment, config.logdet, draws, config.lam)
        if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            dump = {k: np.array2string(v, precision=4) for k, v in model.params().items()}
            raise NumericalError(f"non-finite objective or gradient; parameters: {dump}")
        values.append(value)
        if config.learning_rate > 0:
            model.set_params(optimizer.step(model.params(), grads))
            max_lip = max(max_lip, model.f.project(config.lipschitz_budget))
    return float(np.mean(values)) if values else float("nan"), max_lip


def observed_loglik_rows(model: CausalModel, data: InterventionalDataset) -> np.ndarray:
    """Exact per-row ``log p(x_observed)`` under the linear Gaussian model."""
    out = np.empty(data.n)
    x = np.where(data.mask, data.x, 0.0)
    for experiment, rows in data.regimes().items():
        precision = model_precision(model, experiment)
        cov = np.linalg.inv(precision)
        cov = 0.5 * (cov + cov.T)
        out[rows] = kernels.marginal_loglik_rows(cov, x[rows], data.mask[rows])
    return out


def fit(data: InterventionalDataset, config: TrainConfig, truth: np.ndarray | None = None,
        method: str = "missnodags", test: InterventionalDataset | None = None,
        callback=None) -> tuple[CausalModel, RunMetrics]:
    """Train a causal model on ``data`` with the chosen missing-data strategy.

    ``missnodags`` alternates imputation and optimization every epoch;
    ``mean_impute_then_learn`` fills gaps once with per-experiment means;
    ``clean`` ignores the mask (``data.x`` must then hold true values).
    """
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}; choose from {METHODS}")
    init_rng = _rng(config.seed, 10**6)
    model = CausalModel.initialize(data.d, config.kind, init_rng, config.hidden,
                                   config.lipschitz_budget, config.temperature, config.init_scale)
    optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.eps)
    metrics = RunMetrics()

    if method == "clean":
        if np.isnan(data.x).any():
            raise ParameterError("clean training needs complete values")
        fixed = data.x.copy()
    elif method == "mean_impute_then_learn":
        fixed = mean_impute(data)
    else:
        fixed = None
    train_view = InterventionalDataset(data.x, np.ones_like(data.mask), data.intervened) \
        if fixed is not None else data

    start = time.perf_counter()
    for epoch in range(config.epochs):
        X = fixed if fixed is not None else e_step(model, data, config.seed, epoch)
        q_value, max_lip = m_step(model, X, train_view, config, optimizer,
                                  _rng(config.seed, epoch, 1))
        if model.kind == "linear":
            rows_ll = observed_loglik_rows(model, data)
            ll = float(rows_ll.mean())
            se = float(rows_ll.std(ddof=1) / math.sqrt(min(config.batch_size, data.n))) if data.n > 1 else 0.0
        else:
            ll, se = float("nan"), float("nan")
        est = model.structure(config.threshold)
        metrics.records.append(EpochRecord(
            epoch=epoch + 1, observed_loglik=ll, observed_loglik_se=se, q_value=q_value,
            shd=float(shd(est, truth)) if truth is not None else float("nan"),
            wall_time_s=time.perf_counter() - start, max_lipschitz=max_lip))
        if callback is not None:
            callback(model, metrics.records[-1])
    metrics.structure = model.structure(config.threshold)
    if test is not None:
        metrics.test_nll = evaluate_nll(model, test, config)
    return model, metrics


def evaluate_nll(model: CausalModel, data: InterventionalDataset,
                 config: TrainConfig | None = None, seed: int = 0) -> float:
    """Mean negative interventional log-likelihood with exact log-determinants.

    Rows with missing entries are completed once with the model before scoring.
    """
    X = impute_dataset(model, data, _rng(seed, 2**20)) if not data.mask.all() \
        else np.asarray(data.x, float)
    exact = LogDetConfig(mode="exact")
    mask = model.expected_mask()
    total = 0.0
    for experiment, rows in data.regimes().items():
        total += batch_log_density(model, X[rows], experiment, mask, exact).sum()
    return float(-total / data.n)


def config_dict(config: TrainConfig) -> dict:
    out = asdict(config)
    out["logdet"] = asdict(config.logdet)
    return out
