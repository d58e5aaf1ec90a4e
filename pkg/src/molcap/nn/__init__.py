"""Deterministic numpy neural-network kernel for the fused classifier."""

from .layers import bce_with_logits, sigmoid
from .model import Model, ModelConfig, load_checkpoint, save_checkpoint
from .optim import TrainState, adam_step, init_train_state, reduce_lr_on_plateau
from .train import (
    EpochRecord,
    TrainConfig,
    TrainResult,
    predict_scores,
    train,
    write_history_csv,
)

__all__ = [
    "Model",
    "ModelConfig",
    "TrainConfig",
    "TrainState",
    "TrainResult",
    "EpochRecord",
    "train",
    "predict_scores",
    "adam_step",
    "init_train_state",
    "reduce_lr_on_plateau",
    "save_checkpoint",
    "load_checkpoint",
    "write_history_csv",
    "sigmoid",
    "bce_with_logits",
]
