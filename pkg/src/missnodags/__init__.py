"""Learning cyclic causal graphs from partially missing interventional data."""
from .graph import ParameterError, extract_structure, sample_erdos_renyi, shd
from .kernels import BACKEND
from .model import CausalModel
from .sem import Experiment, GroundTruthSEM, InterventionalDataset

__all__ = [
    "BACKEND",
    "CausalModel",
    "Experiment",
    "GroundTruthSEM",
    "InterventionalDataset",
    "ParameterError",
    "extract_structure",
    "sample_erdos_renyi",
    "shd",
]
