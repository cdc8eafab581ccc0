"""Architecture descriptors and flat parameter vectors."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LAYER_KINDS = ("dense", "conv", "batchnorm", "activation")


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    param_count: int
    mac_count: int
    quantizable: bool

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if self.param_count < 0 or self.mac_count < 0:
            raise ValueError(f"layer {self.name!r}: negative param or MAC count")
        if self.quantizable and self.kind in ("batchnorm", "activation"):
            raise ValueError(f"layer {self.name!r}: {self.kind} layers are never quantizable")


@dataclass
class ModelDescriptor:
    """Ordered layer list of a network.

    ``arch`` optionally records how to rebuild the network from the toy zoo;
    descriptors of reference architectures (ResNets) leave it empty.
    """

    layers: list[LayerSpec]
    arch: dict | None = None

    def __post_init__(self):
        names = [layer.name for layer in self.layers]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValueError(f"duplicate layer names: {dupes}")

    @property
    def quantizable(self) -> list[LayerSpec]:
        return [layer for layer in self.layers if layer.quantizable]

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(f"unknown layer {name!r}")

    def total_params(self, quantizable_only: bool = False) -> int:
        layers = self.quantizable if quantizable_only else self.layers
        return sum(layer.param_count for layer in layers)

    def total_macs(self) -> int:
        return sum(layer.mac_count for layer in self.layers)

    def to_dict(self) -> dict:
        out = {
            "layers": [
                {
                    "name": layer.name,
                    "kind": layer.kind,
                    "param_count": layer.param_count,
                    "mac_count": layer.mac_count,
                    "quantizable": layer.quantizable,
                }
                for layer in self.layers
            ]
        }
        if self.arch is not None:
            out["arch"] = self.arch
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ModelDescriptor":
        try:
            layers = [
                LayerSpec(
                    name=str(item["name"]),
                    kind=str(item["kind"]),
                    param_count=int(item["param_count"]),
                    mac_count=int(item["mac_count"]),
                    quantizable=bool(item["quantizable"]),
                )
                for item in data["layers"]
            ]
        except KeyError as exc:
            raise ValueError(f"descriptor layer entry missing field {exc}") from None
        return cls(layers, data.get("arch"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ModelDescriptor":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ParamVector:
    """A flat float64 vector with a per-layer ``(offset, length)`` layout."""

    values: np.ndarray
    layout: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("parameter values must be a flat vector")
        covered = 0
        for name, (offset, length) in sorted(self.layout.items(), key=lambda kv: kv[1][0]):
            if offset != covered or length < 0:
                raise ValueError(f"layout segment {name!r} is not contiguous at offset {offset}")
            covered += length
        if covered != self.values.size:
            raise ValueError(
                f"layout covers {covered} entries but the vector has {self.values.size}"
            )

    def __len__(self) -> int:
        return self.values.size

    def segment(self, name: str) -> np.ndarray:
        offset, length = self.layout[name]
        return self.values[offset : offset + length]

    def like(self, values) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=np.float64), dict(self.layout))

    def zeros_like(self) -> "ParamVector":
        return self.like(np.zeros_like(self.values))

    def copy(self) -> "ParamVector":
        return self.like(self.values.copy())

    def save(self, path, extra: dict | None = None) -> None:
        """Write ``path`` as little-endian float64 and ``path + '.json'`` as the layout."""
        path = Path(path)
        path.write_bytes(self.values.astype("<f8").tobytes())
        sidecar = {"layout": {k: list(v) for k, v in self.layout.items()}}
        if extra:
            sidecar.update(extra)
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> tuple["ParamVector", dict]:
        path = Path(path)
        values = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
        sidecar = json.loads(Path(str(path) + ".json").read_text())
        layout = {k: (int(v[0]), int(v[1])) for k, v in sidecar.pop("layout").items()}
        return cls(values, layout), sidecar
