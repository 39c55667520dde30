"""MCAR missingness masks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ParameterError
from .sem import InterventionalDataset


@dataclass(frozen=True)
class McarConfig:
    rate: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ParameterError(f"missing rate must lie in [0, 1), got {self.rate}")


def apply_mcar(data: InterventionalDataset, config: McarConfig,
               rng: np.random.Generator | None = None) -> InterventionalDataset:
    """Hide each non-intervened entry independently with probability ``config.rate``.

    The true values stay in ``x`` (useful as an oracle); only ``mask``
    changes. Intervened entries are never hidden.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    hide = rng.random(data.x.shape) < config.rate
    hide &= ~data.intervened
    out = data.subset(np.arange(data.n))
    out.mask = data.mask & ~hide
    return out
