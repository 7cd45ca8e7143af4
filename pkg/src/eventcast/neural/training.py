"""Masked pre-training and target fine-tuning with Adam.

One seed drives everything random in a run (shuffling, dropout); two runs
with the same windows, config and seed produce identical loss curves and
parameters.  Fine-tuning defaults to one tenth of the pre-training
learning rate and early-stops when validation loss has not improved for
``patience`` epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigurationError, TrainingError
from ..sequencer import SequenceWindow, windows_to_arrays
from .models import SequenceForecaster


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    epochs: int = 100
    patience: int = 10
    pretrain_lr: float = 0.001
    finetune_lr: float | None = None   # None: pretrain_lr / 10
    weight_decay: float = 0.0001
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigurationError("batch_size, epochs and patience must be positive")
        if self.pretrain_lr <= 0:
            raise ConfigurationError("pretrain_lr must be positive")

    @property
    def effective_finetune_lr(self) -> float:
        return self.finetune_lr if self.finetune_lr is not None else self.pretrain_lr / 10.0


@dataclass
class TrainResult:
    train_losses: list[float] = field(default_factory=list)
    valid_losses: list[float] = field(default_factory=list)
    epochs_run: int = 0
    best_epoch: int | None = None
    stopped_early: bool = False

    def loss_curve_rows(self) -> list[tuple[int, float, float | None]]:
        rows = []
        for epoch, train in enumerate(self.train_losses, start=1):
            valid = self.valid_losses[epoch - 1] if self.valid_losses else None
            rows.append((epoch, train, valid))
        return rows


class Adam:
    """Adam with decoupled L2 weight decay."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params, grads, lr: float, weight_decay: float) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for name, grad in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(grad)
                self.v[name] = np.zeros_like(grad)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad**2
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            params[name] -= lr * (
                m_hat / (np.sqrt(v_hat) + self.eps) + weight_decay * params[name]
            )


def evaluate_loss(model, ids, positions, targets, batch_size: int = 512) -> float:
    total, slots = 0.0, 0
    for start in range(0, ids.shape[0], batch_size):
        stop = start + batch_size
        n = min(stop, ids.shape[0]) - start
        loss = model.loss_only(ids[start:stop], positions[start:stop], targets[start:stop])
        count = n * positions.shape[1]
        total += loss * count
        slots += count
    return total / slots


def _run_training(
    model: SequenceForecaster,
    windows: Sequence[SequenceWindow],
    cfg: TrainConfig,
    lr: float,
    valid_windows: Sequence[SequenceWindow] | None,
) -> TrainResult:
    if not windows:
        raise TrainingError("no training windows")
    ids, positions, targets = windows_to_arrays(windows)
    valid_arrays = windows_to_arrays(valid_windows) if valid_windows else None

    rng = np.random.default_rng(cfg.seed)
    adam = Adam()
    result = TrainResult()
    best = np.inf
    stale = 0
    n = ids.shape[0]
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            batch = perm[start : start + cfg.batch_size]
            loss, grads = model.loss_and_grads(
                ids[batch], positions[batch], targets[batch], train=True, rng=rng
            )
            adam.step(model.params, grads, lr, cfg.weight_decay)
            epoch_loss += loss * batch.size
            seen += batch.size
        result.train_losses.append(epoch_loss / seen)
        result.epochs_run = epoch + 1
        if valid_arrays is not None:
            valid_loss = evaluate_loss(model, *valid_arrays)
            result.valid_losses.append(valid_loss)
            if valid_loss < best:
                best = valid_loss
                result.best_epoch = epoch + 1
                stale = 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    result.stopped_early = True
                    break
    model.canonicalize_precision()
    return result


def pretrain(
    model: SequenceForecaster,
    windows: Sequence[SequenceWindow],
    cfg: TrainConfig,
    valid_windows: Sequence[SequenceWindow] | None = None,
) -> TrainResult:
    """Train on randomly-masked windows (loss at every masked position)."""
    result = _run_training(model, windows, cfg, cfg.pretrain_lr, valid_windows)
    model.metadata["pretrained"] = True
    model.metadata["pretrain_epochs"] = result.epochs_run
    return result


def finetune(
    model: SequenceForecaster,
    windows: Sequence[SequenceWindow],
    cfg: TrainConfig,
    valid_windows: Sequence[SequenceWindow] | None = None,
) -> TrainResult:
    """Train on target-masked windows at the reduced learning rate.

    Works from a pretrained model or from scratch; the provenance is
    recorded in the model metadata either way.
    """
    model.metadata.setdefault("pretrained", False)
    result = _run_training(model, windows, cfg, cfg.effective_finetune_lr, valid_windows)
    model.metadata["finetuned"] = True
    model.metadata["finetune_epochs"] = result.epochs_run
    return result


def predict_distributions(
    model: SequenceForecaster,
    windows: Sequence[SequenceWindow],
    batch_size: int = 512,
) -> np.ndarray:
    """(B, M, V) evaluation-mode probabilities for a masked window list."""
    ids, positions, _ = windows_to_arrays(windows)
    chunks = [
        model.predict_probs(ids[start : start + batch_size], positions[start : start + batch_size])
        for start in range(0, ids.shape[0], batch_size)
    ]
    return np.concatenate(chunks, axis=0)


def write_loss_curve(result: TrainResult, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("epoch,train_loss,valid_loss\n")
        for epoch, train, valid in result.loss_curve_rows():
            valid_text = "" if valid is None else repr(valid)
            handle.write(f"{epoch},{train!r},{valid_text}\n")
