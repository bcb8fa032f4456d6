from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import (
    BatchNorm1d,
    Conv1d,
    DegenerateBatchError,
    Dropout,
    Linear,
    ReLU,
    ShapeMismatchError,
)
from .lstm import LSTM, BiLSTM
from .model import ModelConfig, TranscriptionModel, count_params
from .optim import AdamW

__all__ = [
    "AdamW",
    "BatchNorm1d",
    "BiLSTM",
    "CheckpointError",
    "Conv1d",
    "DegenerateBatchError",
    "Dropout",
    "LSTM",
    "Linear",
    "ModelConfig",
    "ReLU",
    "ShapeMismatchError",
    "TranscriptionModel",
    "count_params",
    "load_checkpoint",
    "save_checkpoint",
]
