"""Probabilistic multi-horizon forecasting with dilated causal convolutions."""
from .data import CovariateSchema, SeriesPanel, load_panel, load_prepared, save_panel
from .errors import (
                     CheckpointError,
                     CheckpointVersionError,
                     ConfigError,
                     DataError,
                     DeepTCNError,
                     DimensionError,
                     DomainError,
                     MetricError,
                     NumericError,
)
from .model import DeepTCN, ModelSpec, build_model
from .train import TrainConfig, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "CheckpointVersionError", "ConfigError", "CovariateSchema", "DataError", "DeepTCN",
    "DeepTCNError", "DimensionError", "DomainError", "MetricError", "ModelSpec", "NumericError", "SeriesPanel",
    "TrainConfig", "build_model", "load_checkpoint", "load_panel", "load_prepared", "save_checkpoint", "save_panel",
    "train",
]
