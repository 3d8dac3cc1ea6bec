"""Potential-energy regularized distance classifier for learning with noisy labels."""

__version__ = "0.1.0"

from .energy import PEParams, pe_center_loss, pe_energy, pe_pair_loss, simulate_center_dynamics
from .head import HeadConfig, kernel_distances, posterior, predict
from .losses import LossConfig, total_loss
from .trainer import TrainConfig, train

__all__ = [
    "PEParams", "pe_center_loss", "pe_energy", "pe_pair_loss", "simulate_center_dynamics",
    "HeadConfig", "kernel_distances", "posterior", "predict",
    "LossConfig", "total_loss", "TrainConfig", "train",
]
