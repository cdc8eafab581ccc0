"""Uniform affine fake quantization, clipping strategies and BN folding.

Scales are chosen so that quantizing an already-quantized tensor reproduces
the same scale bit-for-bit, which makes :func:`fake_quant` exactly
idempotent for minmax and mse clipping. Percentile clipping is not
idempotent: the percentile of a quantized tensor generally falls between
grid points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

BIT_OPTIONS = (2, 3, 4, 8)
MSE_GRID_POINTS = 100


@dataclass(frozen=True)
class QuantSpec:
    bits: int = 8
    granularity: str = "per_tensor"
    scheme: str = "symmetric"
    clip_method: str = "minmax"
    percentile: float = 99.9

    def __post_init__(self):
        if self.bits not in BIT_OPTIONS:
            raise ValueError(f"bits must be one of {BIT_OPTIONS}, got {self.bits}")
        if self.granularity not in ("per_tensor", "per_channel"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.scheme not in ("symmetric", "asymmetric"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.clip_method not in ("minmax", "percentile", "mse"):
            raise ValueError(f"unknown clip method {self.clip_method!r}")
        if self.clip_method == "percentile" and not 50 < self.percentile < 100:
            raise ValueError("percentile must lie in (50, 100)")

    def with_bits(self, bits: int) -> "QuantSpec":
        return QuantSpec(bits, self.granularity, self.scheme, self.clip_method, self.percentile)

    @property
    def qmin(self) -> int:
        return -(2 ** (self.bits - 1) - 1) if self.scheme == "symmetric" else 0

    @property
    def qmax(self) -> int:
        return 2 ** (self.bits - 1) - 1 if self.scheme == "symmetric" else 2**self.bits - 1

    def to_dict(self) -> dict:
        out = {"bits": self.bits, "granularity": self.granularity, "scheme": self.scheme,
               "clip_method": self.clip_method}
        if self.clip_method == "percentile":
            out["percentile"] = self.percentile
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "QuantSpec":
        return cls(**data)


@dataclass
class QuantizedTensor:
    codes: np.ndarray
    scale: np.ndarray
    zero_point: np.ndarray
    spec: QuantSpec
    shape: tuple = field(default=())

    def __post_init__(self):
        if np.any(self.scale <= 0):
            raise ValueError("scales must be positive")


def _stable_scale(span: float, steps: int) -> float:
    """``span / steps`` nudged to a value ``s`` with ``fl(fl(steps*s)/steps) == s``.

    A tensor whose extreme sits at ``steps*s`` then re-derives ``s`` exactly.
    """
    s = span / steps
    up = down = s
    for _ in range(64):
        for t in (up, down):
            if (steps * t) / steps == t:
                return t
        up = math.nextafter(up, math.inf)
        down = math.nextafter(down, -math.inf)
    # powers of two satisfy the identity for any small integer count
    return 2.0 ** math.ceil(math.log2(s))


def _short_scale(span: float, steps: int) -> float:
    """``span / steps`` with a 40-bit mantissa, so small-integer multiples are exact."""
    m, e = math.frexp(span / steps)
    return math.ldexp(math.ceil(m * 2**40) / 2**40, e)


def _channels(w: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """View ``w`` as ``[groups, elements]``: one group per tensor or per leading-axis channel."""
    if spec.granularity == "per_channel":
        if w.ndim < 1:
            raise ValueError("per-channel quantization needs a leading channel axis")
        return w.reshape(w.shape[0], -1)
    return w.reshape(1, -1)


def _range_for(row: np.ndarray, spec: QuantSpec, clip: float | None = None) -> tuple[float, float]:
    """Clip interval ``[lo, hi]`` (always containing 0) for one group."""
    if spec.scheme == "symmetric":
        if clip is None:
            if spec.clip_method == "percentile":
                clip = float(np.percentile(np.abs(row), spec.percentile))
            else:
                clip = float(np.max(np.abs(row)))
        return -clip, clip
    lo, hi = float(min(row.min(), 0.0)), float(max(row.max(), 0.0))
    if spec.clip_method == "percentile":
        lo = float(min(np.percentile(row, 100 - spec.percentile), 0.0))
        hi = float(max(np.percentile(row, spec.percentile), 0.0))
    if clip is not None:
        lo, hi = lo * clip, hi * clip
    return lo, hi


def _params_for(lo: float, hi: float, spec: QuantSpec) -> tuple[float, int]:
    if spec.scheme == "symmetric":
        if hi <= 0:
            return 1.0, 0
        return _stable_scale(hi, spec.qmax), 0
    if hi - lo <= 0:
        return 1.0, 0
    scale = _short_scale(hi - lo, spec.qmax)
    return scale, int(np.clip(np.rint(-lo / scale), 0, spec.qmax))


def _encode(row, scale, zp, spec):
    return np.clip(np.rint(row / scale) + zp, spec.qmin, spec.qmax).astype(np.int64)


def _decode(codes, scale, zp):
    return (codes - zp) * scale


def _mse_params(row: np.ndarray, spec: QuantSpec) -> tuple[float, int, tuple[float, float]]:
    best = None
    # symmetric: clip = factor * max|w|; asymmetric: both ends scaled by factor
    for factor in np.linspace(0.1, 1.0, MSE_GRID_POINTS):
        if spec.scheme == "symmetric":
            lo, hi = _range_for(row, spec, clip=float(factor * np.max(np.abs(row))))
        else:
            lo, hi = _range_for(row, spec, clip=float(factor))
        scale, zp = _params_for(lo, hi, spec)
        err = float(np.sum((_decode(_encode(row, scale, zp, spec), scale, zp) - row) ** 2))
        # ties go to the wider range
        if best is None or err <= best[0]:
            best = (err, scale, zp, (lo, hi))
    return best[1], best[2], best[3]


def clip_ranges(w, spec: QuantSpec) -> list[tuple[float, float]]:
    """The ``(lo, hi)`` clip interval chosen for each quantization group of ``w``."""
    groups = _channels(np.asarray(w, dtype=np.float64), spec)
    if spec.clip_method == "mse":
        return [_mse_params(row, spec)[2] for row in groups]
    return [_range_for(row, spec) for row in groups]


def quantize(w, spec: QuantSpec) -> QuantizedTensor:
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("cannot quantize an empty tensor")
    groups = _channels(w, spec)
    scales = np.empty(len(groups))
    zps = np.empty(len(groups), dtype=np.int64)
    codes = np.empty(groups.shape, dtype=np.int64)
    for i, row in enumerate(groups):
        if spec.clip_method == "mse":
            scales[i], zps[i], _ = _mse_params(row, spec)
        else:
            scales[i], zps[i] = _params_for(*_range_for(row, spec), spec)
        codes[i] = _encode(row, scales[i], zps[i], spec)
    return QuantizedTensor(codes.reshape(w.shape), scales, zps, spec, w.shape)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    codes = np.asarray(q.codes)
    groups = codes.reshape(len(q.scale), -1)
    out = (groups - q.zero_point[:, None]) * q.scale[:, None]
    return out.reshape(codes.shape)


def fake_quant(w, spec: QuantSpec) -> np.ndarray:
    return dequantize(quantize(w, spec))


def perturbation_norm(w, spec: QuantSpec) -> float:
    """Squared L2 norm of the quantization error ``||fake_quant(w) - w||^2``."""
    w = np.asarray(w, dtype=np.float64)
    return float(np.sum((fake_quant(w, spec) - w) ** 2))


@dataclass
class BnFoldInput:
    weight: np.ndarray  # [out_channels, ...]
    bias: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5


def fold_bn(x: BnFoldInput) -> tuple[np.ndarray, np.ndarray]:
    """Merge BN statistics into the preceding layer's weight and bias."""
    denom = np.asarray(x.var, dtype=np.float64) + x.eps
    if np.any(denom <= 0):
        raise ValueError("BN variance + eps must be positive")
    weight = np.asarray(x.weight, dtype=np.float64)
    c = weight.shape[0]
    for name in ("bias", "mean", "var", "gamma", "beta"):
        if np.shape(getattr(x, name)) != (c,):
            raise ValueError(f"BN fold: {name} must have shape ({c},)")
    factor = np.asarray(x.gamma) / np.sqrt(denom)
    w_folded = weight * factor.reshape((c,) + (1,) * (weight.ndim - 1))
    b_folded = (np.asarray(x.bias) - np.asarray(x.mean)) * factor + np.asarray(x.beta)
    return w_folded, b_folded
