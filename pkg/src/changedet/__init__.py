"""Siamese window-attention change detection for dual-phase image pairs."""

from .backbone import EncoderConfig, SiameseEncoder
from .config import TrainConfig, desk_config, full_config
from .decoder import DecoderConfig, PredictionSet
from .estimator import ChangeDetector
from .grids import FeaturePyramid, TokenGrid
from .losses import LossConfig, combined_loss, total_loss
from .metrics import ConfusionCounts, compute
from .model import ChangeDetectionNet
from .training import TrainResult, lr_schedule, train

__version__ = "0.1.0"

__all__ = [
    "ChangeDetector",
    "ChangeDetectionNet",
    "ConfusionCounts",
    "DecoderConfig",
    "EncoderConfig",
    "FeaturePyramid",
    "LossConfig",
    "PredictionSet",
    "SiameseEncoder",
    "TokenGrid",
    "TrainConfig",
    "TrainResult",
    "combined_loss",
    "compute",
    "desk_config",
    "full_config",
    "lr_schedule",
    "total_loss",
    "train",
    "__version__",
]
