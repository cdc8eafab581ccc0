"""Batches, seeded synthetic datasets, and the ``.mpqd`` binary image format.

``.mpqd`` layout (all little-endian)::

    magic      4 bytes   b"MPQD"
    version    uint32    1
    n          uint32    number of samples
    channels   uint32
    height     uint32
    width      uint32    (height = width = 0 for flat feature vectors)
    features   uint32    per-sample feature count (channels*height*width for images)
    classes    uint32
    inputs     n*features float64
    labels     n int32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_MAGIC = b"MPQD"
_HEADER = struct.Struct("<4s7I")


@dataclass
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if len(self.inputs) != len(self.labels):
            raise ValueError(f"{len(self.inputs)} inputs but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)

    def take(self, idx) -> "Batch":
        return Batch(self.inputs[idx], self.labels[idx])


@dataclass
class Dataset:
    train: Batch
    val: Batch
    num_classes: int

    def __post_init__(self):
        for part in (self.train, self.val):
            labels = np.asarray(part.labels)
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise ValueError(f"labels must lie in [0, {self.num_classes})")


def split(batch: Batch, num_classes: int, val_fraction: float = 0.25, seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(batch))
    n_val = int(round(len(batch) * val_fraction))
    return Dataset(batch.take(order[n_val:]), batch.take(order[:n_val]), num_classes)


def gaussian_blobs(n, num_classes=3, dim=4, separation=3.0, seed=0) -> Batch:
    """Isotropic unit-variance blobs around random centres ``separation`` apart on average."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, separation / np.sqrt(2.0), (num_classes, dim))
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    inputs = centres[labels] + rng.normal(size=(n, dim))
    return Batch(inputs, labels)


def pattern_images(n, num_classes=4, size=8, channels=1, noise=0.6, seed=0) -> Batch:
    """Images of class-specific smooth templates plus pixel noise, shape ``[n, c, size, size]``."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    templates = []
    for _ in range(num_classes):
        fx, fy = rng.uniform(0.5, 2.5, 2)
        px, py = rng.uniform(0, 2 * np.pi, 2)
        base = np.sin(2 * np.pi * fx * xx + px) * np.cos(2 * np.pi * fy * yy + py)
        templates.append(np.stack([base * rng.uniform(0.7, 1.3) for _ in range(channels)]))
    templates = np.asarray(templates)
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    inputs = templates[labels] + noise * rng.normal(size=(n, channels, size, size))
    return Batch(inputs, labels)


def save_mpqd(path, batch: Batch, num_classes: int) -> None:
    inputs = np.asarray(batch.inputs, dtype="<f8")
    n = len(inputs)
    if inputs.ndim == 4:
        _, c, h, w = inputs.shape
    elif inputs.ndim == 2:
        c, h, w = 1, 0, 0
    else:
        raise ValueError("inputs must be [n, features] or [n, c, h, w]")
    features = int(np.prod(inputs.shape[1:]))
    header = _HEADER.pack(_MAGIC, 1, n, c, h, w, features, num_classes)
    body = inputs.reshape(n, features).tobytes() + np.asarray(batch.labels, dtype="<i4").tobytes()
    Path(path).write_bytes(header + body)


def load_mpqd(path) -> tuple[Batch, int]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, version, n, c, h, w, features, classes = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not an MPQD v1 file")
    expected = _HEADER.size + n * features * 8 + n * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    off = _HEADER.size
    inputs = np.frombuffer(raw, dtype="<f8", count=n * features, offset=off).astype(np.float64)
    labels = np.frombuffer(raw, dtype="<i4", count=n, offset=off + n * features * 8).astype(np.int64)
    shape = (n, c, h, w) if h and w else (n, features)
    return Batch(inputs.reshape(shape), labels), classes
