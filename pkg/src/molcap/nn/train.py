"""Epoch loop: shuffled balanced batches, augmentation, Adam, plateau decay.

Each epoch shuffles the upsampled training indices with the run seed,
walks them in fixed-size batches (augmenting every image draw-by-draw
from the same generator, so runs are reproducible), and ends with a
validation AUC that drives both best-parameter tracking and the plateau
learning-rate schedule.  Wall-clock seconds are recorded per epoch but
carry no semantic weight; every numeric column of the history is a pure
function of (seed, data, config) in 64-bit mode.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import CachedDataset, augment_image, upsample_minority
from ..errors import ConfigError, NonFiniteLossError
from ..imaging import ChemImage
from ..metrics import auc_roc
from .layers import bce_with_logits
from .model import Model
from .optim import TrainState, adam_step, init_train_state, reduce_lr_on_plateau

__all__ = [
    "TrainConfig",
    "EpochRecord",
    "TrainResult",
    "train",
    "predict_scores",
    "write_history_csv",
]


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters.

    Attributes:
        learning_rate: Initial Adam step size.
        batch_size: Examples per gradient step.
        patience: Non-improving epochs before the rate decays.
        lr_factor: Decay multiplier, strictly between 0 and 1.
        max_epochs: Epochs to run; 0 evaluates the initial state only.
        seed: Drives upsampling, shuffling, and augmentation.
    """

    learning_rate: float = 0.001
    batch_size: int = 32
    patience: int = 5
    lr_factor: float = 0.5
    max_epochs: int = 30
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.lr_factor < 1.0:
            raise ConfigError(f"lr_factor must be in (0, 1), got {self.lr_factor}")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs cannot be negative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


@dataclass(frozen=True)
class EpochRecord:
    """One history row; ``lr`` is the rate the epoch actually used."""

    epoch: int
    train_loss: float
    val_auc: float
    lr: float
    seconds: float


@dataclass
class TrainResult:
    """Final optimizer state plus the best-validation snapshot."""

    state: TrainState
    history: list[EpochRecord]
    best_parameters: dict[str, np.ndarray]
    best_val_auc: float
    best_epoch: int
    train_pool: tuple[int, ...] = field(default=())


def predict_scores(
    model: Model,
    data: CachedDataset,
    indices: list[int],
    batch_size: int = 256,
) -> np.ndarray:
    """Forward-only scores for the given examples, in index order."""
    scores = []
    for start in range(0, len(indices), batch_size):
        batch = list(indices[start : start + batch_size])
        scores.append(
            model.predict(
                data.images[batch], data.fingerprints[batch], data.keys[batch]
            )
        )
    return np.concatenate(scores) if scores else np.zeros(0)


def _mean_loss(
    model: Model, data: CachedDataset, indices: list[int], batch_size: int
) -> float:
    total = 0.0
    for start in range(0, len(indices), batch_size):
        batch = list(indices[start : start + batch_size])
        _, cache = model.forward(
            data.images[batch], data.fingerprints[batch], data.keys[batch]
        )
        loss, _ = bce_with_logits(cache["logits"], data.labels[batch])
        total += loss * len(batch)
    return total / len(indices)


def train(
    model: Model,
    data: CachedDataset,
    train_indices: list[int],
    val_indices: list[int],
    config: TrainConfig,
    augment: bool = True,
    upsample: bool = True,
) -> TrainResult:
    """Fit the model on one train/validation split.

    Upsampling happens here, strictly on ``train_indices``; validation
    examples are never duplicated or augmented.

    Args:
        model: Freshly built or checkpointed model; parameters update in
            place.
        data: Featurized corpus arrays.
        train_indices: Training examples (balanced internally when
            ``upsample`` is set).
        val_indices: Held-out examples scored after every epoch.
        config: Optimization settings.
        augment: Apply random rotation/translation to each training
            image.
        upsample: Balance classes inside the training pool.

    Returns:
        TrainResult; ``best_parameters`` are copies from the epoch with
        the highest validation AUC (the initial state for max_epochs 0).

    Raises:
        NonFiniteLossError: Training diverged; carries the partial
            history.
    """
    if not len(train_indices) or not len(val_indices):
        raise ConfigError("train and validation sets must both be non-empty")
    labels = data.labels
    pool = (
        upsample_minority(list(train_indices), labels, seed=config.seed)
        if upsample
        else list(train_indices)
    )
    rng = np.random.default_rng(config.seed)
    state = init_train_state(model.params, config.learning_rate)
    history: list[EpochRecord] = []
    val_labels = labels[list(val_indices)].tolist()

    def validation_auc(epoch: int) -> float:
        scores = predict_scores(model, data, list(val_indices), config.batch_size)
        if not np.all(np.isfinite(scores)):
            # Divergence can surface here first when the final batch of an
            # epoch breaks the parameters after its own loss was computed.
            raise NonFiniteLossError(epoch, history)
        return auc_roc(scores.tolist(), val_labels)

    if config.max_epochs == 0:
        started = time.perf_counter()
        loss = _mean_loss(model, data, pool, config.batch_size)
        auc = validation_auc(0)
        history.append(
            EpochRecord(0, loss, auc, state.current_lr, time.perf_counter() - started)
        )
        return TrainResult(
            state=state,
            history=history,
            best_parameters={k: v.copy() for k, v in model.params.items()},
            best_val_auc=auc,
            best_epoch=0,
            train_pool=tuple(pool),
        )

    best_auc = -math.inf
    best_epoch = 0
    best_parameters = {k: v.copy() for k, v in model.params.items()}
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(len(pool))
        total_loss = 0.0
        for start in range(0, len(pool), config.batch_size):
            batch = [pool[i] for i in order[start : start + config.batch_size]]
            images = data.images[batch]
            if augment:
                images = np.stack(
                    [
                        augment_image(ChemImage(pixels=image, side=data.side), rng).pixels
                        for image in images
                    ]
                )
            try:
                loss, _, grads = model.loss_and_gradients(
                    images,
                    data.fingerprints[batch],
                    data.keys[batch],
                    labels[batch],
                )
            except NonFiniteLossError:
                raise NonFiniteLossError(epoch, history) from None
            total_loss += loss * len(batch)
            adam_step(state, grads)
        epoch_loss = total_loss / len(pool)
        epoch_lr = state.current_lr
        auc = validation_auc(epoch)
        seconds = time.perf_counter() - started
        history.append(EpochRecord(epoch, epoch_loss, auc, epoch_lr, seconds))
        if auc > best_auc:
            best_auc = auc
            best_epoch = epoch
            best_parameters = {k: v.copy() for k, v in model.params.items()}
        reduce_lr_on_plateau(state, auc, config.patience, config.lr_factor)
    return TrainResult(
        state=state,
        history=history,
        best_parameters=best_parameters,
        best_val_auc=best_auc,
        best_epoch=best_epoch,
        train_pool=tuple(pool),
    )


def write_history_csv(history: list[EpochRecord], path: str | Path) -> None:
    """Write the per-epoch history with a fixed column order."""
    lines = ["epoch,train_loss,val_auc,lr,seconds"]
    for record in history:
        lines.append(
            f"{record.epoch},{record.train_loss!r},{record.val_auc!r},"
            f"{record.lr!r},{record.seconds:.3f}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
