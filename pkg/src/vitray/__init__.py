"""Desk-scale Vision Transformer training and evaluation engine."""

from .errors import (
    ConfigError,
    DataError,
    NotFittedError,
    NumericError,
    ShapeError,
    UsageError,
    VitrayError,
)
from .estimator import VisionTransformerClassifier
from .metrics import PredictionSet, auroc, cohens_kappa, confusion, evaluate, mcc
from .model import ViTConfig, ViTModel, attention, count_parameters, patchify
from .optim import AdamW, CosineSchedule, cross_entropy
from .tensor import Tensor, gelu, layer_norm, make_rng, matmul, softmax
from .train import EpochReport, TrainConfig, run_compare, run_training

__version__ = "0.1.0"

__all__ = [
    "AdamW",
    "ConfigError",
    "CosineSchedule",
    "DataError",
    "EpochReport",
    "NotFittedError",
    "NumericError",
    "PredictionSet",
    "ShapeError",
    "Tensor",
    "TrainConfig",
    "UsageError",
    "ViTConfig",
    "ViTModel",
    "VisionTransformerClassifier",
    "VitrayError",
    "attention",
    "auroc",
    "cohens_kappa",
    "confusion",
    "count_parameters",
    "cross_entropy",
    "evaluate",
    "gelu",
    "layer_norm",
    "make_rng",
    "matmul",
    "mcc",
    "patchify",
    "run_compare",
    "run_training",
    "softmax",
]
