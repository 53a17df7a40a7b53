"""Fixed-confidence best-arm identification with offline and online data."""

__version__ = "0.1.0"

from .spef import Bernoulli, Gaussian, family_from_name
from .oracle import BanditInstance, OfflineDataset, SolverConfig

__all__ = ["Bernoulli", "Gaussian", "family_from_name", "BanditInstance", "OfflineDataset", "SolverConfig"]
