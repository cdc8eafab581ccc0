"""Layer descriptors of the standard ImageNet ResNets at 224x224 input.

Only parameter and multiply-accumulate counts are produced; these networks
are never instantiated. Conv layers are bias-free, every conv is followed by
a BN layer, and the classifier is a dense layer with bias.
"""

from __future__ import annotations

from .descriptor import LayerSpec, ModelDescriptor


class _Builder:
    def __init__(self):
        self.layers: list[LayerSpec] = []

    def conv(self, name, c_in, c_out, k, stride, h, w):
        pad = k // 2
        h_out = (h + 2 * pad - k) // stride + 1
        w_out = (w + 2 * pad - k) // stride + 1
        params = c_out * c_in * k * k
        self.layers.append(LayerSpec(name, "conv", params, params * h_out * w_out, True))
        self.layers.append(LayerSpec(name.replace("conv", "bn").replace("downsample", "downsample_bn"),
                                     "batchnorm", 2 * c_out, 0, False))
        return h_out, w_out

    def act(self, name):
        self.layers.append(LayerSpec(name, "activation", 0, 0, False))


def _resnet(block_counts, bottleneck: bool, num_classes=1000) -> ModelDescriptor:
    b = _Builder()
    h, w = b.conv("conv1", 3, 64, 7, 2, 224, 224)
    b.act("relu")
    h, w = (h + 2 - 3) // 2 + 1, (w + 2 - 3) // 2 + 1  # 3x3/2 max pool
    b.act("maxpool")
    expansion = 4 if bottleneck else 1
    c_in = 64
    for stage, (count, width) in enumerate(zip(block_counts, (64, 128, 256, 512)), start=1):
        for block in range(count):
            stride = 2 if stage > 1 and block == 0 else 1
            p = f"layer{stage}.{block}."
            c_out = width * expansion
            h0, w0 = h, w
            if bottleneck:
                h, w = b.conv(p + "conv1", c_in, width, 1, 1, h, w)
                b.act(p + "relu1")
                h, w = b.conv(p + "conv2", width, width, 3, stride, h, w)
                b.act(p + "relu2")
                h, w = b.conv(p + "conv3", width, c_out, 1, 1, h, w)
            else:
                h, w = b.conv(p + "conv1", c_in, width, 3, stride, h, w)
                b.act(p + "relu1")
                h, w = b.conv(p + "conv2", width, width, 3, 1, h, w)
            if stride != 1 or c_in != c_out:
                b.conv(p + "downsample", c_in, c_out, 1, stride, h0, w0)
            b.act(p + "relu_out")
            c_in = c_out
    b.act("avgpool")
    b.layers.append(LayerSpec("fc", "dense", c_in * num_classes + num_classes, c_in * num_classes, True))
    return ModelDescriptor(b.layers)


def resnet18() -> ModelDescriptor:
    return _resnet((2, 2, 2, 2), bottleneck=False)


def resnet50() -> ModelDescriptor:
    return _resnet((3, 4, 6, 3), bottleneck=True)


REFERENCE = {"resnet18": resnet18, "resnet50": resnet50}
