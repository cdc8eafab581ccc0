"""Small functional networks over a flat float64 parameter vector.

Every model exposes ``objective(theta, batch) -> (logits, loss)`` where
``theta`` is a 1-D torch tensor. Gradients and Hessian-vector products are
taken with respect to that single tensor, which keeps the flat
:class:`ParamVector` layout the only parameter bookkeeping in the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .descriptor import LayerSpec, ModelDescriptor, ParamVector


class Layer:
    kind = "activation"
    quantizable = False

    def __init__(self, name: str):
        self.name = name

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return []

    def output_shape(self, shape):
        return shape

    def mac_count(self, in_shape) -> int:
        return 0

    def init(self, rng: np.random.Generator) -> list[np.ndarray]:
        return []

    def __call__(self, params, x, bn_stats):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"
    quantizable = True

    def __init__(self, name, in_features, out_features):
        super().__init__(name)
        self.in_features = in_features
        self.out_features = out_features

    def param_shapes(self):
        return [("weight", (self.out_features, self.in_features)), ("bias", (self.out_features,))]

    def output_shape(self, shape):
        return (self.out_features,)

    def mac_count(self, in_shape):
        return self.in_features * self.out_features

    def init(self, rng):
        std = math.sqrt(2.0 / self.in_features)
        return [rng.normal(0.0, std, (self.out_features, self.in_features)), np.zeros(self.out_features)]

    def __call__(self, params, x, bn_stats):
        w, b = params
        return x.reshape(x.shape[0], -1) @ w.T + b


class Conv2d(Layer):
    kind = "conv"
    quantizable = True

    def __init__(self, name, in_channels, out_channels, kernel_size=3, stride=1, padding=1):
        super().__init__(name)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding

    def param_shapes(self):
        k = self.kernel_size
        return [
            ("weight", (self.out_channels, self.in_channels, k, k)),
            ("bias", (self.out_channels,)),
        ]

    def output_shape(self, shape):
        _, h, w = shape
        k, s, p = self.kernel_size, self.stride, self.padding
        return (self.out_channels, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)

    def mac_count(self, in_shape):
        _, h, w = self.output_shape(in_shape)
        return self.out_channels * self.in_channels * self.kernel_size**2 * h * w

    def init(self, rng):
        fan_in = self.in_channels * self.kernel_size**2
        shape = self.param_shapes()[0][1]
        return [rng.normal(0.0, math.sqrt(2.0 / fan_in), shape), np.zeros(self.out_channels)]

    def __call__(self, params, x, bn_stats):
        w, b = params
        return F.conv2d(x, w, b, stride=self.stride, padding=self.padding)


class BatchNorm(Layer):
    """Batch normalization over the channel axis.

    Uses batch statistics unless ``bn_stats`` carries ``(mean, var)`` for
    this layer, which is how evaluation-mode inference is expressed.
    """

    kind = "batchnorm"

    def __init__(self, name, channels, eps=1e-5):
        super().__init__(name)
        self.channels = channels
        self.eps = eps

    def param_shapes(self):
        return [("gamma", (self.channels,)), ("beta", (self.channels,))]

    def init(self, rng):
        return [np.ones(self.channels), np.zeros(self.channels)]

    def __call__(self, params, x, bn_stats):
        gamma, beta = params
        dims = [0] + list(range(2, x.ndim))
        if bn_stats is not None and self.name in bn_stats:
            mean, var = (torch.as_tensor(a, dtype=torch.float64) for a in bn_stats[self.name])
        else:
            mean = x.mean(dim=dims)
            var = x.var(dim=dims, unbiased=False)
        view = (1, -1) + (1,) * (x.ndim - 2)
        xhat = (x - mean.reshape(view)) / torch.sqrt(var.reshape(view) + self.eps)
        return gamma.reshape(view) * xhat + beta.reshape(view)


class ReLU(Layer):
    def __call__(self, params, x, bn_stats):
        return torch.relu(x)


class Tanh(Layer):
    def __call__(self, params, x, bn_stats):
        return torch.tanh(x)


class GlobalAvgPool(Layer):
    def output_shape(self, shape):
        return (shape[0],)

    def __call__(self, params, x, bn_stats):
        return x.mean(dim=(2, 3))


class Network:
    """A sequential network with a cross-entropy (or squared-error) head."""

    def __init__(self, layers, input_shape, num_outputs, loss="ce", arch=None):
        names = [layer.name for layer in layers]
        if len(set(names)) != len(names):
            raise ValueError("layer names must be unique")
        if loss not in ("ce", "mse"):
            raise ValueError(f"unknown loss {loss!r}")
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.num_outputs = num_outputs
        self.loss = loss
        self.arch = arch
        self.layout: dict[str, tuple[int, int]] = {}
        offset = 0
        for layer in self.layers:
            n = sum(int(np.prod(shape)) for _, shape in layer.param_shapes())
            if n:
                self.layout[layer.name] = (offset, n)
                offset += n
        self.size = offset

    def __repr__(self):
        return f"Network({[layer.name for layer in self.layers]}, params={self.size})"

    @property
    def quantizable_layers(self) -> list[str]:
        return [layer.name for layer in self.layers if layer.quantizable]

    @property
    def has_batchnorm(self) -> bool:
        return any(isinstance(layer, BatchNorm) for layer in self.layers)

    def get(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(f"unknown layer {name!r}")

    def weight_shape(self, name: str) -> tuple[int, ...]:
        return self.get(name).param_shapes()[0][1]

    def weight_view(self, params: ParamVector, name: str) -> np.ndarray:
        """The weight tensor of ``name`` (a view into ``params``; bias excluded)."""
        shape = self.weight_shape(name)
        return params.segment(name)[: int(np.prod(shape))].reshape(shape)

    def init_params(self, seed: int = 0) -> ParamVector:
        rng = np.random.default_rng(seed)
        chunks = []
        for layer in self.layers:
            chunks.extend(np.ravel(a) for a in layer.init(rng))
        values = np.concatenate(chunks) if chunks else np.zeros(0)
        return ParamVector(values, dict(self.layout))

    def unpack(self, theta: torch.Tensor) -> dict[str, list[torch.Tensor]]:
        out = {}
        for layer in self.layers:
            if layer.name not in self.layout:
                out[layer.name] = []
                continue
            offset, _ = self.layout[layer.name]
            tensors = []
            for _, shape in layer.param_shapes():
                n = int(np.prod(shape))
                tensors.append(theta[offset : offset + n].reshape(shape))
                offset += n
            out[layer.name] = tensors
        return out

    def check_inputs(self, inputs) -> None:
        shape = tuple(inputs.shape[1:])
        if shape != self.input_shape:
            raise ValueError(f"input shape {shape} does not match model input {self.input_shape}")

    def logits(self, theta, inputs, bn_stats=None):
        self.check_inputs(inputs)
        x = torch.as_tensor(inputs, dtype=torch.float64)
        params = self.unpack(theta)
        for layer in self.layers:
            x = layer(params[layer.name], x, bn_stats)
        return x

    def head_loss(self, out, labels):
        if self.loss == "ce":
            return F.cross_entropy(out, torch.as_tensor(labels, dtype=torch.long))
        target = torch.as_tensor(labels, dtype=torch.float64).reshape(out.shape)
        return ((out - target) ** 2).mean()

    def objective(self, theta, batch, bn_stats=None):
        out = self.logits(theta, batch.inputs, bn_stats)
        if self.loss == "ce":
            labels = np.asarray(batch.labels)
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_outputs):
                raise ValueError(f"labels must lie in [0, {self.num_outputs})")
        return out, self.head_loss(out, batch.labels)

    def bn_statistics(self, params: ParamVector, inputs) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Per-channel mean and (biased) variance seen by every BN layer on ``inputs``."""
        self.check_inputs(inputs)
        stats = {}
        with torch.no_grad():
            x = torch.as_tensor(inputs, dtype=torch.float64)
            unpacked = self.unpack(torch.from_numpy(params.values))
            for layer in self.layers:
                if isinstance(layer, BatchNorm):
                    dims = [0] + list(range(2, x.ndim))
                    stats[layer.name] = (
                        x.mean(dim=dims).numpy().copy(),
                        x.var(dim=dims, unbiased=False).numpy().copy(),
                    )
                x = layer(unpacked[layer.name], x, stats)
        return stats

    def descriptor(self) -> ModelDescriptor:
        specs = []
        shape = self.input_shape
        for layer in self.layers:
            n = self.layout.get(layer.name, (0, 0))[1]
            specs.append(LayerSpec(layer.name, layer.kind, n, layer.mac_count(shape), layer.quantizable))
            shape = layer.output_shape(shape)
        return ModelDescriptor(specs, self.arch)


@dataclass
class QuadraticModel:
    """Loss ``0.5 * theta^T A theta`` split into named layer blocks.

    Used to check curvature code against a Hessian known in closed form.
    """

    A: np.ndarray
    layer_sizes: dict[str, int]
    num_outputs: int = 2

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        if not np.allclose(self.A, self.A.T):
            raise ValueError("A must be symmetric")
        self.layout = {}
        offset = 0
        for name, n in self.layer_sizes.items():
            self.layout[name] = (offset, n)
            offset += n
        if offset != self.A.shape[0]:
            raise ValueError("layer sizes must sum to the dimension of A")
        self.size = offset
        self._A = torch.from_numpy(self.A)

    @property
    def quantizable_layers(self) -> list[str]:
        return list(self.layer_sizes)

    has_batchnorm = False
    input_shape = None

    def weight_shape(self, name):
        return (self.layer_sizes[name],)

    def weight_view(self, params, name):
        return params.segment(name)

    def objective(self, theta, batch, bn_stats=None):
        n = len(batch.labels) if batch is not None else 1
        return torch.zeros(n, self.num_outputs, dtype=torch.float64), 0.5 * theta @ (self._A @ theta)

    def descriptor(self) -> ModelDescriptor:
        return ModelDescriptor(
            [LayerSpec(name, "dense", n, n, True) for name, n in self.layer_sizes.items()]
        )


def mlp(sizes, activation="relu", loss="ce", prefix="fc") -> Network:
    """Dense network ``sizes[0] -> ... -> sizes[-1]``."""
    if len(sizes) < 2:
        raise ValueError("an MLP needs at least input and output sizes")
    act = {"relu": ReLU, "tanh": Tanh}[activation]
    layers: list[Layer] = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        layers.append(Dense(f"{prefix}{i}", n_in, n_out))
        if i < len(sizes) - 1:
            layers.append(act(f"{activation}{i}"))
    arch = {"zoo": "mlp", "sizes": list(sizes), "activation": activation}
    return Network(layers, (sizes[0],), sizes[-1], loss=loss, arch=arch)


def convnet(in_channels=1, image_size=8, num_classes=4, channels=(8, 16, 16), batchnorm=True) -> Network:
    """Three 3x3 conv blocks (conv, BN, ReLU), global average pooling, one dense head."""
    layers: list[Layer] = []
    c_in = in_channels
    for i, c_out in enumerate(channels, start=1):
        layers.append(Conv2d(f"conv{i}", c_in, c_out, 3, stride=1 if i == 1 else 2, padding=1))
        if batchnorm:
            layers.append(BatchNorm(f"bn{i}", c_out))
        layers.append(ReLU(f"relu{i}"))
        c_in = c_out
    layers.append(GlobalAvgPool("pool"))
    layers.append(Dense("fc", c_in, num_classes))
    arch = {
        "zoo": "convnet",
        "in_channels": in_channels,
        "image_size": image_size,
        "num_classes": num_classes,
        "channels": list(channels),
        "batchnorm": batchnorm,
    }
    return Network(layers, (in_channels, image_size, image_size), num_classes, arch=arch)


def without_batchnorm(net: Network) -> Network:
    """Same architecture with every BN layer removed (the shape after folding)."""
    if net.arch and net.arch.get("zoo") == "convnet":
        arch = dict(net.arch, batchnorm=False)
    else:
        arch = net.arch
    layers = [layer for layer in net.layers if not isinstance(layer, BatchNorm)]
    return Network(layers, net.input_shape, net.num_outputs, net.loss, arch)


def build(arch: dict) -> Network:
    """Rebuild a zoo network from the ``arch`` record of its descriptor."""
    kind = arch.get("zoo")
    if kind == "mlp":
        return mlp(arch["sizes"], arch.get("activation", "relu"))
    if kind == "convnet":
        return convnet(
            arch.get("in_channels", 1),
            arch.get("image_size", 8),
            arch.get("num_classes", 4),
            tuple(arch.get("channels", (8, 16, 16))),
            arch.get("batchnorm", True),
        )
    raise ValueError(f"descriptor does not name a buildable zoo architecture: {arch!r}")
