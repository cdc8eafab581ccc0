"""A 64-config benchmark with a known unique optimum and cheap, correlated short scores."""

from __future__ import annotations

import hashlib

import numpy as np

from .space import Dimension, HparamConfig, HparamSpace


def synthetic_space() -> HparamSpace:
    return HparamSpace([
        Dimension("channel", "boolean"),
        Dimension("bn_fold", "boolean"),
        Dimension("distill", "boolean"),
        Dimension("clip", "categorical", ("minmax", "mse")),
        Dimension("bits_early", "bit_choice", (4, 8)),
        Dimension("bits_late", "bit_choice", (4, 8)),
    ])


def _jitter(config: HparamConfig, salt: str) -> float:
    """Deterministic value in [-1, 1) keyed by the config."""
    h = hashlib.sha256((salt + config.key()).encode()).digest()
    return int.from_bytes(h[:8], "little") / 2**63 - 1.0


class SyntheticEvaluator:
    """Mostly additive effects plus one interaction and a small fixed jitter.

    ``full_eval`` is the ground truth; ``short_eval`` is a noisier,
    compressed version of it, as truncated training would give.
    """

    def __init__(self, short_noise: float = 0.03):
        self.short_noise = short_noise
        self.calls = {"short": 0, "full": 0}

    def score(self, c: HparamConfig) -> float:
        s = 0.50
        s += 0.08 * c["channel"] + 0.05 * c["bn_fold"] + 0.06 * c["distill"]
        s += 0.04 * (c["clip"] == "mse")
        s += 0.10 * (c["bits_early"] == 8) + 0.07 * (c["bits_late"] == 8)
        s += 0.03 * (c["distill"] and c["bits_early"] == 4)
        return s + 0.005 * _jitter(c, "full")

    def full_eval(self, config: HparamConfig) -> float:
        self.calls["full"] += 1
        return self.score(config)

    def short_eval(self, config: HparamConfig) -> float:
        self.calls["short"] += 1
        return 0.8 * self.score(config) + self.short_noise * _jitter(config, "short")


def exhaustive_scores(space: HparamSpace, evaluator: SyntheticEvaluator) -> np.ndarray:
    return np.array([evaluator.score(c) for c in space])
