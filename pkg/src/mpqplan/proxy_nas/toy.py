"""Evaluator that quantizes, optionally folds BN, fine-tunes and scores a small trained network."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import torch

from ..distill import DistillConfig, kd_loss
from ..netlab.train import TrainSchedule, evaluate, train
from ..quantizer import QuantSpec, fake_quant
from ..simulate import fold_network
from .space import Dimension, HparamConfig, HparamSpace


def toy_space(layer_names, bit_options=(4, 8), clip_methods=("minmax", "percentile", "mse")) -> HparamSpace:
    dims = [
        Dimension("channel", "boolean"),
        Dimension("bn_fold", "boolean"),
        Dimension("distill", "boolean"),
        Dimension("clip", "categorical", tuple(clip_methods)),
    ]
    dims += [Dimension(f"bits_{name}", "bit_choice", tuple(bit_options)) for name in layer_names]
    return HparamSpace(dims)


class ToyQuantEvaluator:
    """Scores a config by validation accuracy after quantization-aware fine-tuning.

    Weights are fake-quantized in the forward pass with a straight-through
    gradient. The float network is the distillation teacher. Short and full
    evaluations differ only in the number of fine-tuning epochs.
    """

    def __init__(self, net, params, dataset, schedule: TrainSchedule, short_epochs: int = 0,
                 full_epochs: int = 2, seed: int = 0, distill_cfg: DistillConfig = DistillConfig()):
        self.net, self.params, self.dataset = net, params, dataset
        self.schedule = schedule
        self.short_epochs, self.full_epochs = short_epochs, full_epochs
        self.seed = seed
        self.distill_cfg = distill_cfg
        self.stats = net.bn_statistics(params, dataset.train.inputs) if net.has_batchnorm else None
        self.teacher = torch.from_numpy(params.values.copy())

    def space(self, bit_options=(4, 8)) -> HparamSpace:
        return toy_space(self.net.quantizable_layers, bit_options)

    def _spec(self, config: HparamConfig) -> QuantSpec:
        return QuantSpec(8, "per_channel" if config["channel"] else "per_tensor", "symmetric", config["clip"])

    def evaluate(self, config: HparamConfig, epochs: int) -> float:
        spec = self._spec(config)
        net, params = self.net, self.params
        if config["bn_fold"] and net.has_batchnorm:
            net, params = fold_network(net, params, self.stats)
        bits = {name: config[f"bits_{name}"] for name in net.quantizable_layers}
        segments = {name: (net.layout[name][0], int(np.prod(net.weight_shape(name)))) for name in bits}

        def quantized(values: np.ndarray) -> np.ndarray:
            out = values.copy()
            for name, (offset, n) in segments.items():
                w = values[offset : offset + n].reshape(net.weight_shape(name))
                out[offset : offset + n] = fake_quant(w, spec.with_bits(bits[name])).ravel()
            return out

        def objective(theta, batch):
            q = torch.from_numpy(quantized(theta.detach().numpy()))
            theta_q = theta + (q - theta).detach()
            logits, loss = net.objective(theta_q, batch)
            if not config["distill"]:
                return loss
            with torch.no_grad():
                teacher_logits = self.net.logits(self.teacher, batch.inputs, self.stats)
            return kd_loss(logits, teacher_logits, batch.labels, self.distill_cfg)

        trained, _ = train(net, params, self.dataset, replace(self.schedule, epochs=epochs),
                           seed=self.seed, objective=objective)
        final = trained.like(quantized(trained.values))
        stats = net.bn_statistics(final, self.dataset.train.inputs) if net.has_batchnorm else None
        return evaluate(net, final, self.dataset.val, stats)

    def short_eval(self, config: HparamConfig) -> float:
        return self.evaluate(config, self.short_epochs)

    def full_eval(self, config: HparamConfig) -> float:
        return self.evaluate(config, self.full_epochs)
