"""Minibatch SGD trainer with early stopping, plus top-1 evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import torch

from .data import Batch, Dataset
from .descriptor import ParamVector

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch_index: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch_index}")
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass(frozen=True)
class TrainSchedule:
    # defaults are the reported ImageNet fine-tuning settings; toy runs override lr
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    batch_size: int = 128
    epochs: int = 10
    early_stop_patience: Optional[int] = None
    momentum: float = 0.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


def predict(model, params: ParamVector, inputs, bn_stats=None) -> np.ndarray:
    with torch.no_grad():
        out = model.logits(torch.from_numpy(params.values), inputs, bn_stats)
    return out.numpy()


def evaluate(model, params: ParamVector, data, bn_stats=None) -> float:
    """Top-1 accuracy of argmax logits on ``data`` (a Batch, or a Dataset's val split)."""
    batch = data.val if isinstance(data, Dataset) else data
    if len(batch) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits = predict(model, params, batch.inputs, bn_stats)
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(batch.labels)))


Objective = Callable[[torch.Tensor, Batch], torch.Tensor]


def train(
    model,
    params: ParamVector,
    dataset: Dataset,
    schedule: TrainSchedule,
    seed: int = 0,
    objective: Objective | None = None,
) -> tuple[ParamVector, list[tuple[int, float, float]]]:
    """Train with SGD; return the best-validation parameters and per-epoch history.

    ``objective(theta, batch)`` replaces the model's own loss when given
    (distillation uses this). Validation accuracy for BN models is measured
    with statistics of the full training split.
    """
    if objective is None:
        def objective(theta, batch):
            return model.objective(theta, batch)[1]

    history: list[tuple[int, float, float]] = []
    if schedule.epochs == 0:
        return params.copy(), history

    rng = np.random.default_rng(seed)
    theta = torch.tensor(params.values, dtype=torch.float64, requires_grad=True)
    velocity = torch.zeros_like(theta)
    best = (-math.inf, params.copy())
    stale = 0
    n = len(dataset.train)
    for epoch in range(1, schedule.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for b, start in enumerate(range(0, n, schedule.batch_size)):
            batch = dataset.train.take(order[start : start + schedule.batch_size])
            loss = objective(theta, batch)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, b, value)
            (g,) = torch.autograd.grad(loss, theta)
            with torch.no_grad():
                g = g + schedule.weight_decay * theta
                velocity.mul_(schedule.momentum).add_(g)
                theta.sub_(schedule.learning_rate * velocity)
            losses.append(value * len(batch))
        current = params.like(theta.detach().numpy().copy())
        stats = model.bn_statistics(current, dataset.train.inputs) if model.has_batchnorm else None
        acc = evaluate(model, current, dataset.val, stats)
        history.append((epoch, sum(losses) / n, acc))
        log.debug("epoch %d loss %.5f val_acc %.4f", epoch, history[-1][1], acc)
        if acc > best[0]:
            best = (acc, current)
            stale = 0
        else:
            stale += 1
            if schedule.early_stop_patience is not None and stale >= schedule.early_stop_patience:
                break
    return best[1], history


def fit_full_batch(model, params: ParamVector, batch: Batch, steps: int, lr: float = 1e-2) -> ParamVector:
    """Full-batch Adam on the model's own loss; used for small regressors."""
    theta = torch.tensor(params.values, dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([theta], lr=lr)
    for step in range(steps):
        opt.zero_grad()
        _, loss = model.objective(theta, batch)
        if not torch.isfinite(loss):
            raise TrainingDiverged(step, 0, loss.item())
        loss.backward()
        opt.step()
    return params.like(theta.detach().numpy().copy())
