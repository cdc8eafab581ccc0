"""Simulated quantized inference of zoo networks under a bit plan."""

from __future__ import annotations

from .netlab.descriptor import ParamVector
from .netlab.net import BatchNorm, Conv2d, Dense, Network, without_batchnorm
from .netlab.train import evaluate
from .quantizer import BnFoldInput, QuantSpec, fake_quant, fold_bn


def fold_network(net: Network, params: ParamVector, bn_stats) -> tuple[Network, ParamVector]:
    """Fold every BN layer into the conv/dense layer right before it."""
    folded_net = without_batchnorm(net)
    values = {}
    pending = None
    for layer in net.layers:
        if isinstance(layer, (Conv2d, Dense)):
            seg = params.segment(layer.name)
            n_w = len(seg) - layer.param_shapes()[1][1][0]
            pending = layer.name
            values[layer.name] = [seg[:n_w].reshape(layer.param_shapes()[0][1]).copy(), seg[n_w:].copy()]
        elif isinstance(layer, BatchNorm):
            if pending is None:
                raise ValueError(f"BN layer {layer.name} has no preceding conv/dense layer to fold into")
            seg = params.segment(layer.name)
            gamma, beta = seg[: layer.channels], seg[layer.channels :]
            mean, var = bn_stats[layer.name]
            w, b = values[pending]
            values[pending] = list(fold_bn(BnFoldInput(w, b, mean, var, gamma, beta, layer.eps)))
            pending = None
    out = folded_net.init_params(0)
    for name, (w, b) in values.items():
        offset, length = out.layout[name]
        out.values[offset : offset + w.size] = w.ravel()
        out.values[offset + w.size : offset + length] = b
    return folded_net, out


def quantize_weights(net, params: ParamVector, layer_bits: dict[str, int], spec: QuantSpec = QuantSpec()) -> ParamVector:
    """Fake-quantize the weight tensor of every layer in ``layer_bits``; biases stay in float."""
    out = params.copy()
    for name, bits in layer_bits.items():
        w = net.weight_view(out, name)
        w[...] = fake_quant(w, spec.with_bits(bits))
    return out


def plan_accuracy(
    net: Network,
    params: ParamVector,
    dataset,
    layer_bits: dict[str, int],
    spec: QuantSpec = QuantSpec(),
    bn_fold: bool = False,
) -> float:
    """Validation accuracy of the network with weights quantized per ``layer_bits``.

    BN statistics come from the float model on the training split. With
    ``bn_fold`` the statistics are folded into the weights before quantizing.
    """
    stats = net.bn_statistics(params, dataset.train.inputs) if net.has_batchnorm else None
    if bn_fold and net.has_batchnorm:
        net, params = fold_network(net, params, stats)
        stats = None
    quantized = quantize_weights(net, params, layer_bits, spec)
    return evaluate(net, quantized, dataset.val, stats)
