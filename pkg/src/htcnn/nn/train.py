"""Mini-batch training with Adam, MSE loss and early stopping."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, NumericalError
from .optim import AdamState, adam_step, mse_loss

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 1e-3
    patience: int = 50
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigurationError("patience must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigurationError("validation_fraction must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigurationError("epochs, batch_size and learning_rate must be positive")


@dataclass
class TrainResult:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    best_loss: float = float("inf")
    epochs_run: int = 0
    stopped_early: bool = False

    def to_dict(self):
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "best_epoch": self.best_epoch,
            "best_loss": self.best_loss,
            "epochs_run": self.epochs_run,
            "stopped_early": self.stopped_early,
        }


def evaluate_loss(network, samples, batch_size=256) -> float:
    """Inference-mode MSE over a whole SampleSet."""
    n = len(samples)
    total = 0.0
    for i in range(0, n, batch_size):
        sl = slice(i, i + batch_size)
        pred = network.forward([x[sl] for x in samples.inputs], training=False)
        loss, _ = mse_loss(pred, samples.targets[sl])
        total += loss * pred.shape[0]
    return total / n


def split_validation(n: int, fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Chronological split: the last ``fraction`` of samples validate."""
    n_val = 0 if fraction == 0 else max(1, int(round(fraction * n)))
    if n - n_val < 1:
        raise ConfigurationError(f"{n} samples cannot be split with validation fraction {fraction}")
    return np.arange(n - n_val), np.arange(n - n_val, n)


def train(network, samples, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Train ``network`` in place and restore its best-validation parameters.

    Samples are assumed chronological; the validation set is carved from the
    tail before the training part is shuffled each epoch. With
    ``validation_fraction == 0`` the training loss drives early stopping.
    Raises NumericalError if the loss becomes non-finite.
    """
    if len(samples) == 0:
        raise ConfigurationError("no training samples")
    train_idx, val_idx = split_validation(len(samples), config.validation_fraction)
    train_set = samples.subset(train_idx)
    val_set = samples.subset(val_idx) if len(val_idx) else None
    rng = np.random.default_rng(config.seed)
    params = network.params()
    state = AdamState(params, learning_rate=config.learning_rate)
    result = TrainResult()
    best = network.snapshot()
    n = len(train_set)

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        running = 0.0
        for i in range(0, n, config.batch_size):
            idx = order[i:i + config.batch_size]
            network.zero_grad()
            pred = network.forward([x[idx] for x in train_set.inputs], training=True)
            loss, grad = mse_loss(pred, train_set.targets[idx])
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}, batch {i // config.batch_size}")
            network.backward(grad)
            adam_step(state)
            running += loss * len(idx)
        result.train_loss.append(running / n)
        monitored = result.train_loss[-1]
        if val_set is not None:
            monitored = evaluate_loss(network, val_set)
            if not np.isfinite(monitored):
                raise NumericalError(f"non-finite validation loss at epoch {epoch}")
            result.val_loss.append(monitored)
        result.epochs_run = epoch + 1
        if monitored < result.best_loss:
            result.best_loss = monitored
            result.best_epoch = epoch
            best = network.snapshot()
        elif epoch - result.best_epoch >= config.patience:
            result.stopped_early = True
            log.debug("early stop at epoch %d (best %d)", epoch, result.best_epoch)
            break

    network.restore(best)
    return result
