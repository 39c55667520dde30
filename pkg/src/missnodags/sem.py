"""Ground-truth data generation for cyclic SEMs under surgical interventions."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import ParameterError, spectral_norm


class SimulationError(RuntimeError):
    """The fixed-point solve of a nonlinear SEM failed to converge."""


@dataclass(frozen=True)
class Experiment:
    """Interventional experiment: the set of surgically intervened nodes.

    Every node not in ``intervened`` is purely observed.
    """

    d: int
    intervened: tuple[int, ...] = ()

    def __post_init__(self):
        targets = tuple(sorted(set(int(i) for i in self.intervened)))
        if any(i < 0 or i >= self.d for i in targets):
            raise ParameterError(f"intervention target out of range for d={self.d}")
        object.__setattr__(self, "intervened", targets)

    @property
    def observed_nodes(self) -> tuple[int, ...]:
        hit = set(self.intervened)
        return tuple(i for i in range(self.d) if i not in hit)

    @property
    def u(self) -> np.ndarray:
        """Diagonal of ``U`` as a float vector (1 for non-intervened nodes)."""
        u = np.ones(self.d)
        u[list(self.intervened)] = 0.0
        return u

    @classmethod
    def from_indicator(cls, row: np.ndarray) -> "Experiment":
        return cls(len(row), tuple(np.flatnonzero(row)))

    def indicator(self) -> np.ndarray:
        out = np.zeros(self.d, dtype=bool)
        out[list(self.intervened)] = True
        return out


@dataclass
class GroundTruthSEM:
    """Data-generating mechanism ``x = U f(x) + U e + c``.

    ``kind='linear'`` uses ``f(x) = weights.T @ x``; ``kind='tanh'`` uses
    ``f(x) = tanh(weights.T @ x)``.
    """

    kind: str
    weights: np.ndarray
    sigma: float = 0.25
    lipschitz: float = 0.9

    def __post_init__(self):
        if self.kind not in ("linear", "tanh"):
            raise ParameterError(f"unknown SEM kind {self.kind!r}")
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def d(self) -> int:
        return self.weights.shape[0]

    def f(self, X: np.ndarray) -> np.ndarray:
        Z = X @ self.weights
        return Z if self.kind == "linear" else np.tanh(Z)


@dataclass
class InterventionalDataset:
    """Samples, non-missingness indicators and per-row intervention targets.

    Attributes
    ----------
    x : (n, d) float array. Missing entries hold the true value when known
        (simulated data) and NaN otherwise.
    mask : (n, d) bool array, True where the value is observed.
    intervened : (n, d) bool array, True where the node was intervened on.
    """

    x: np.ndarray
    mask: np.ndarray
    intervened: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        n, d = self.x.shape
        self.mask = np.ones((n, d), bool) if self.mask is None else np.asarray(self.mask, bool)
        self.intervened = np.asarray(self.intervened, bool)
        if self.mask.shape != (n, d) or self.intervened.shape != (n, d):
            raise ParameterError("x, mask and intervened must share one shape")
        if np.any(self.intervened & ~self.mask):
            raise ParameterError("intervened nodes must be observed")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def regimes(self) -> dict[Experiment, np.ndarray]:
        """Row indices grouped by experiment, in order of first appearance."""
        cached = getattr(self, "_regimes", None)
        if cached is not None and cached[0] is self.intervened:
            return dict(cached[1])
        keys, inverse = np.unique(self.intervened, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        first = [np.flatnonzero(inverse == k)[0] for k in range(len(keys))]
        out = {}
        for k in np.argsort(first):
            out[Experiment.from_indicator(keys[k])] = np.flatnonzero(inverse == k)
        object.__setattr__(self, "_regimes", (self.intervened, out))
        return dict(out)

    def subset(self, rows) -> "InterventionalDataset":
        rows = np.asarray(rows)
        return InterventionalDataset(self.x[rows].copy(), self.mask[rows].copy(),
                                     self.intervened[rows].copy(), dict(self.meta))

    def observed_values(self) -> np.ndarray:
        """``x`` with unobserved entries replaced by NaN."""
        return np.where(self.mask, self.x, np.nan)

    def sample(self, i: int) -> tuple[np.ndarray, np.ndarray, Experiment]:
        return self.x[i], self.mask[i], Experiment.from_indicator(self.intervened[i])

    @property
    def missing_rate(self) -> float:
        return float(1.0 - self.mask.mean()) if self.x.size else 0.0


def simulate(sem: GroundTruthSEM, experiment: Experiment, n: int,
             rng: np.random.Generator, tol: float = 1e-9,
             max_iter: int = 1000, damping: float = 0.5) -> np.ndarray:
    """Draw ``n`` samples of the SEM under ``experiment``.

    Noise ``e ~ N(0, sigma^2 I)`` is drawn first, then intervened values
    ``c_I ~ N(0, I)``. The linear SEM is solved exactly; the tanh SEM by
    fixed-point iteration from zero (damped when ``lipschitz >= 1``).

    Returns
    -------
    np.ndarray
        ``(n, d)`` samples.
    """
    d = sem.d
    if experiment.d != d:
        raise ParameterError("experiment dimension does not match the SEM")
    u = experiment.u
    E = sem.sigma * rng.standard_normal((n, d))
    C = np.zeros((n, d))
    targets = list(experiment.intervened)
    C[:, targets] = rng.standard_normal((n, len(targets)))
    drive = E * u + C

    if sem.kind == "linear":
        # rows: x^T (I - B U) = drive^T
        A = np.eye(d) - sem.weights * u[None, :]
        return np.linalg.solve(A.T, drive.T).T

    alpha = damping if sem.lipschitz >= 1.0 else 1.0
    X = np.zeros((n, d))
    for _ in range(max_iter):
        target = sem.f(X) * u + drive
        X_new = (1.0 - alpha) * X + alpha * target
        delta = np.max(np.abs(X_new - X)) if X.size else 0.0
        X = X_new
        if delta < tol:
            return X
    raise SimulationError(
        f"fixed-point iteration did not converge in {max_iter} steps "
        f"(spectral norm of weights {spectral_norm(sem.weights):.4g})")


def make_single_node_plan(d: int, n_per_intervention: int) -> list[tuple[Experiment, int]]:
    """One experiment per node, each intervening exactly that node."""
    if d < 1:
        raise ParameterError("d must be positive")
    return [(Experiment(d, (k,)), n_per_intervention) for k in range(d)]


def simulate_plan(sem: GroundTruthSEM, plan, rng: np.random.Generator) -> InterventionalDataset:
    """Simulate every ``(experiment, count)`` in ``plan`` into one complete dataset."""
    xs, targets = [], []
    for experiment, count in plan:
        xs.append(simulate(sem, experiment, count, rng))
        targets.append(np.repeat(experiment.indicator()[None, :], count, axis=0))
    x = np.vstack(xs) if xs else np.zeros((0, sem.d))
    intervened = np.vstack(targets) if targets else np.zeros((0, sem.d), bool)
    return InterventionalDataset(x, np.ones_like(x, dtype=bool), intervened)
