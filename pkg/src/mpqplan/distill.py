"""Soft-target knowledge distillation loss and training wrapper."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .netlab.descriptor import ParamVector
from .netlab.train import TrainSchedule, train


@dataclass(frozen=True)
class DistillConfig:
    temperature: float = 4.0
    alpha: float = 0.9  # weight on the hard-label term

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")


def _t(x):
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x), dtype=torch.float64)


def soft_term(student_logits, teacher_logits, temperature: float) -> torch.Tensor:
    """``T^2 * KL(softmax(teacher/T) || softmax(student/T))``, averaged over the batch."""
    if not temperature > 0:
        raise ValueError("temperature must be > 0")
    s, t = _t(student_logits), _t(teacher_logits)
    log_p_s = F.log_softmax(s / temperature, dim=1)
    log_p_t = F.log_softmax(t / temperature, dim=1)
    kl = (log_p_t.exp() * (log_p_t - log_p_s)).sum(dim=1).mean()
    return temperature**2 * kl


def kd_loss(student_logits, teacher_logits, labels, cfg: DistillConfig = DistillConfig()) -> torch.Tensor:
    s, t = _t(student_logits), _t(teacher_logits)
    if s.shape != t.shape:
        raise ValueError(f"student logits {tuple(s.shape)} and teacher logits {tuple(t.shape)} differ")
    hard = F.cross_entropy(s, torch.as_tensor(np.asarray(labels), dtype=torch.long))
    return cfg.alpha * hard + (1.0 - cfg.alpha) * soft_term(s, t, cfg.temperature)


def checksum(params: ParamVector) -> str:
    return hashlib.sha256(np.ascontiguousarray(params.values).tobytes()).hexdigest()


def distill_train(
    student,
    student_params: ParamVector,
    teacher,
    teacher_params: ParamVector,
    dataset,
    schedule: TrainSchedule,
    cfg: DistillConfig = DistillConfig(),
    seed: int = 0,
):
    """Train ``student`` against ``teacher``'s softened outputs; the teacher is frozen.

    Teacher logits use evaluation-mode BN statistics from the training split.
    """
    before = checksum(teacher_params)
    frozen = torch.from_numpy(teacher_params.values.copy())
    stats = teacher.bn_statistics(teacher_params, dataset.train.inputs) if teacher.has_batchnorm else None

    def objective(theta, batch):
        with torch.no_grad():
            teacher_logits = teacher.logits(frozen, batch.inputs, stats)
        student_logits, _ = student.objective(theta, batch)
        return kd_loss(student_logits, teacher_logits, batch.labels, cfg)

    result = train(student, student_params, dataset, schedule, seed=seed, objective=objective)
    if checksum(teacher_params) != before:
        raise RuntimeError("teacher parameters changed during distillation")
    return result
