"""The learnable causal model: function, mask distribution and noise precision."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functions import LinearFunction, MaskDistribution, MaskedMlpFunction, NoisePrecision
from .graph import extract_structure


@dataclass
class CausalModel:
    f: LinearFunction | MaskedMlpFunction
    mask: MaskDistribution
    noise: NoisePrecision
    budget: float = 0.9

    @property
    def d(self) -> int:
        return self.f.d

    @property
    def kind(self) -> str:
        return self.f.kind

    @classmethod
    def initialize(cls, d: int, kind: str, rng: np.random.Generator,
                   hidden: int | None = None, budget: float = 0.9,
                   temperature: float = 1.0, init_scale: float = 0.1) -> "CausalModel":
        """Small uniform weights, edge probabilities 1/2, unit noise variances."""
        if kind == "linear":
            f = LinearFunction(rng.uniform(-init_scale, init_scale, (d, d)))
        elif kind == "mlp":
            h = d if hidden is None else hidden
            f = MaskedMlpFunction(rng.uniform(-init_scale, init_scale, (d, h)),
                                  rng.uniform(-init_scale, init_scale, (h, d)))
        else:
            raise ValueError(f"unknown model kind {kind!r}")
        f.project(budget)
        phi = np.zeros((d, d))
        return cls(f, MaskDistribution(phi, temperature), NoisePrecision(np.zeros(d)), budget)

    def params(self) -> dict[str, np.ndarray]:
        out = dict(self.f.params())
        out["phi"] = self.mask.phi
        out["log_var"] = self.noise.log_var
        return out

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        self.f.set_params({k: params[k] for k in self.f.params()})
        self.mask.phi = np.array(params["phi"], dtype=float)
        np.fill_diagonal(self.mask.phi, 0.0)
        self.noise.log_var = np.array(params["log_var"], dtype=float)

    def copy(self) -> "CausalModel":
        return CausalModel(self.f.copy(), MaskDistribution(self.mask.phi.copy(), self.mask.temperature),
                           NoisePrecision(self.noise.log_var.copy()), self.budget)

    def expected_mask(self) -> np.ndarray:
        """Edge probabilities, used as a deterministic mask for imputation and evaluation."""
        return self.mask.probabilities()

    def adjacency(self) -> np.ndarray:
        """Weighted adjacency of the linearized model under the expected mask."""
        return self.f.linear_map(self.expected_mask())

    def structure(self, threshold: float = 0.5) -> np.ndarray:
        return extract_structure(self.mask.probabilities(), threshold)
