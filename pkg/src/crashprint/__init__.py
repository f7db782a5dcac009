"""Crash-session fingerprinting with autoencoder embeddings and deep embedded clustering."""

from ._core import BACKEND as KERNEL_BACKEND
from .errors import (CrashprintError, InvalidInputError, InvalidStateError, ModelMismatchError,
                     ThresholdTooStrictError, TrainingDivergedError, UndefinedMetricError)
from .pipeline import ModelBundle, PipelineConfig

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "CrashprintError", "InvalidInputError", "InvalidStateError",
           "ModelMismatchError", "ThresholdTooStrictError", "TrainingDivergedError",
           "UndefinedMetricError", "ModelBundle", "PipelineConfig"]
