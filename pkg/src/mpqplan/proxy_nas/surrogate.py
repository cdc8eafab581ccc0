"""Two-layer MLP regressor from config encodings to scores."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..netlab.autodiff import forward
from ..netlab.data import Batch
from ..netlab.descriptor import ParamVector
from ..netlab.net import Network, mlp
from ..netlab.train import fit_full_batch

HIDDEN = 32
STEPS = 500


@dataclass
class ProxyRecord:
    config: object
    encoding: np.ndarray
    score: float
    fidelity: str  # "short" or "full"

    def __post_init__(self):
        if self.fidelity not in ("short", "full"):
            raise ValueError(f"fidelity must be 'short' or 'full', got {self.fidelity!r}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass
class Surrogate:
    net: Network
    params: ParamVector
    mean: float
    scale: float
    forward_calls: int = field(default=0)

    def __call__(self, encoding) -> float:
        """One forward pass for one encoded config."""
        x = np.asarray(encoding, dtype=np.float64).reshape(1, -1)
        self.forward_calls += 1
        out, _ = forward(self.net, self.params, Batch(x, np.zeros((1, 1))))
        return float(out[0, 0] * self.scale + self.mean)


def fit_proxy(records, seed: int = 0, hidden: int = HIDDEN, steps: int = STEPS, lr: float = 1e-2) -> Surrogate:
    """Fit ``encoding -> score`` by full-batch squared error.

    Targets are standardized and the output layer starts at zero, so a
    constant-score training set yields a constant predictor.
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError(f"fit_proxy needs at least 2 records, got {len(records)}")
    X = np.stack([np.asarray(r.encoding, dtype=np.float64) for r in records])
    y = np.array([r.score for r in records], dtype=np.float64)
    mean = float(y.mean())
    std = float(y.std())
    scale = std if std > 1e-12 else 1.0
    net = mlp([X.shape[1], hidden, 1], activation="tanh", loss="mse")
    params = net.init_params(seed)
    out_w = net.weight_view(params, "fc2")
    out_w[...] = 0.0
    params = fit_full_batch(net, params, Batch(X, ((y - mean) / scale).reshape(-1, 1)), steps, lr)
    return Surrogate(net, params, mean, scale)
