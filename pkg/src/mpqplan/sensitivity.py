"""Per-layer Hessian traces (Hutchinson) and the layer x bit-width sensitivity table."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .netlab.autodiff import HessianOperator
from .netlab.descriptor import ParamVector
from .quantizer import QuantSpec, perturbation_norm

log = logging.getLogger(__name__)

DISTRIBUTIONS = ("rademacher", "gaussian")


@dataclass(frozen=True)
class TraceEstimate:
    mean: float
    stderr: float
    samples: int
    distribution: str

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("a trace estimate needs at least one sample")
        if self.stderr < 0:
            raise ValueError("stderr must be non-negative")


def probe_vectors(dim: int, samples: int, distribution: str = "rademacher", seed: int = 0) -> np.ndarray:
    """``[samples, dim]`` probes with identity covariance.

    Row ``j`` depends only on ``(seed, j, dim)``: rows are consecutive blocks
    of one seeded stream, so any prefix of probes is reproducible on its own.
    """
    if distribution not in DISTRIBUTIONS:
        raise ValueError(f"distribution must be one of {DISTRIBUTIONS}")
    rng = np.random.default_rng(seed)
    if distribution == "rademacher":
        return rng.integers(0, 2, size=(samples, dim)).astype(np.float64) * 2.0 - 1.0
    return rng.standard_normal((samples, dim))


def hutchinson_trace(
    hvp_oracle: Callable[[np.ndarray], np.ndarray],
    dim: int,
    samples: int = 512,
    distribution: str = "rademacher",
    seed: int = 0,
) -> TraceEstimate:
    """Estimate ``Tr(H)`` as the sample mean of ``z^T H z``."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    quad = np.empty(samples)
    for j, z in enumerate(probe_vectors(dim, samples, distribution, seed)):
        hz = np.asarray(hvp_oracle(z), dtype=np.float64)
        if hz.shape != (dim,):
            raise ValueError(f"oracle returned shape {hz.shape} for a ({dim},) probe")
        value = float(z @ hz)
        if not math.isfinite(value):
            raise FloatingPointError(f"non-finite Hessian-vector product at probe {j}")
        quad[j] = value
    stderr = float(quad.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return TraceEstimate(float(quad.mean()), stderr, samples, distribution)


def layer_trace(
    model,
    params: ParamVector,
    batch,
    layer_name: str,
    samples: int = 512,
    distribution: str = "rademacher",
    seed: int = 0,
    operator: HessianOperator | None = None,
) -> TraceEstimate:
    """Trace of the diagonal Hessian block belonging to one layer's parameters."""
    if layer_name not in model.quantizable_layers:
        raise KeyError(f"{layer_name!r} is not a quantizable layer of this model")
    if operator is None:
        operator = HessianOperator(model, params, batch)
    offset, length = params.layout[layer_name]

    def block(z):
        v = np.zeros(operator.dim)
        v[offset : offset + length] = z
        return operator(v)[offset : offset + length]

    return hutchinson_trace(block, length, samples, distribution, seed)


def mean_trace(trace: TraceEstimate, n_params: int, layer_name: str = "") -> float:
    """Per-parameter trace, clamped at zero."""
    value = trace.mean / n_params
    if value < 0:
        log.warning("negative Hessian trace estimate %.3g for layer %s; clamped to 0", value, layer_name)
        return 0.0
    return value


def layer_sensitivity(
    model,
    params: ParamVector,
    batch,
    layer_name: str,
    bits: int,
    spec: QuantSpec = QuantSpec(),
    trace: TraceEstimate | None = None,
    **trace_kwargs,
) -> float:
    """``(Tr(H_i)/n_i) * ||Q_b(W_i) - W_i||^2`` for one layer at ``bits``."""
    if trace is None:
        trace = layer_trace(model, params, batch, layer_name, **trace_kwargs)
    n = params.layout[layer_name][1]
    weights = model.weight_view(params, layer_name)
    return mean_trace(trace, n, layer_name) * perturbation_norm(weights, spec.with_bits(bits))


@dataclass
class SensitivityProfile:
    layer_names: list[str]
    bit_options: list[int]
    delta: np.ndarray
    trace_per_param: np.ndarray
    param_counts: np.ndarray
    trace_stderr: np.ndarray | None = None
    quant_spec: dict = field(default_factory=dict)

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        self.trace_per_param = np.asarray(self.trace_per_param, dtype=np.float64)
        self.param_counts = np.asarray(self.param_counts, dtype=np.int64)
        L, m = len(self.layer_names), len(self.bit_options)
        if self.delta.shape != (L, m):
            raise ValueError(f"delta has shape {self.delta.shape}, expected {(L, m)}")
        if self.trace_per_param.shape != (L,) or self.param_counts.shape != (L,):
            raise ValueError("trace_per_param and param_counts need one entry per layer")
        if np.any(self.delta < 0):
            raise ValueError("delta entries must be non-negative")

    def to_dict(self) -> dict:
        out = {
            "layers": list(self.layer_names),
            "bit_options": [int(b) for b in self.bit_options],
            "trace_per_param": self.trace_per_param.tolist(),
            "param_counts": self.param_counts.tolist(),
            "delta": self.delta.tolist(),
        }
        if self.trace_stderr is not None:
            out["trace_stderr"] = np.asarray(self.trace_stderr, dtype=np.float64).tolist()
        if self.quant_spec:
            out["quant_spec"] = self.quant_spec
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SensitivityProfile":
        stderr = data.get("trace_stderr")
        return cls(
            list(data["layers"]),
            [int(b) for b in data["bit_options"]],
            np.asarray(data["delta"], dtype=np.float64).reshape(len(data["layers"]), len(data["bit_options"])),
            data["trace_per_param"],
            data["param_counts"],
            None if stderr is None else np.asarray(stderr, dtype=np.float64),
            data.get("quant_spec", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SensitivityProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ProfileConfig:
    samples: int = 512
    distribution: str = "rademacher"
    seed: int = 0
    spec: QuantSpec = QuantSpec()


def layer_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def profile(model, params: ParamVector, batch, bit_options, config: ProfileConfig = ProfileConfig()) -> SensitivityProfile:
    """Fill the L x |B| sensitivity table.

    One trace estimate per layer (traces do not depend on bit-width), then
    one perturbation norm per (layer, bit-width) pair.
    """
    layers = model.quantizable_layers
    if not layers:
        raise ValueError("model has no quantizable layers")
    bit_options = [int(b) for b in bit_options]
    operator = HessianOperator(model, params, batch)
    delta = np.zeros((len(layers), len(bit_options)))
    tpp = np.zeros(len(layers))
    stderr = np.zeros(len(layers))
    counts = np.zeros(len(layers), dtype=np.int64)
    for i, name in enumerate(layers):
        trace = layer_trace(model, params, batch, name, config.samples, config.distribution,
                            layer_seed(config.seed, i), operator=operator)
        counts[i] = params.layout[name][1]
        tpp[i] = mean_trace(trace, counts[i], name)
        stderr[i] = trace.stderr / counts[i]
        weights = model.weight_view(params, name)
        for j, bits in enumerate(bit_options):
            delta[i, j] = tpp[i] * perturbation_norm(weights, config.spec.with_bits(bits))
    return SensitivityProfile(layers, bit_options, delta, tpp, counts, stderr, config.spec.to_dict())
