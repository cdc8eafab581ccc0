"""Hyperparameter spaces, configurations and their fixed-width encodings."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

KINDS = ("categorical", "boolean", "bit_choice")


@dataclass(frozen=True)
class Dimension:
    name: str
    kind: str
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"dimension {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "boolean":
            object.__setattr__(self, "values", (True, False))
        values = tuple(self.values)
        if not values:
            raise ValueError(f"dimension {self.name!r} has no values")
        if len(set(values)) != len(values):
            raise ValueError(f"dimension {self.name!r} repeats a value")
        if self.kind == "bit_choice":
            bad = [v for v in values if isinstance(v, bool) or not isinstance(v, int) or v < 1]
            if bad:
                raise ValueError(f"dimension {self.name!r}: bit options must be positive integers, got {bad}")
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return 1 if self.kind == "bit_choice" else len(self.values)

    def encode(self, value) -> list[float]:
        if value not in self.values or (self.kind != "boolean" and isinstance(value, bool)):
            raise ValueError(f"{value!r} is not in the domain of {self.name!r}: {list(self.values)}")
        if self.kind == "bit_choice":
            return [value / 8.0]
        out = [0.0] * len(self.values)
        out[self.values.index(value)] = 1.0
        return out

    def to_dict(self) -> dict:
        if self.kind == "boolean":
            return {"kind": "boolean"}
        key = "options" if self.kind == "bit_choice" else "values"
        return {"kind": self.kind, key: list(self.values)}


@dataclass(frozen=True)
class HparamConfig:
    """One value per dimension, in space order."""

    names: tuple[str, ...]
    values: tuple

    def __getitem__(self, name: str):
        return self.values[self.names.index(name)]

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.values))

    def key(self) -> str:
        return json.dumps(self.as_dict(), separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.key().encode()).hexdigest()


class HparamSpace:
    def __init__(self, dimensions):
        self.dimensions = list(dimensions)
        if not self.dimensions:
            raise ValueError("a space needs at least one dimension")
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")
        self.names = tuple(names)

    def __repr__(self):
        return f"HparamSpace({', '.join(f'{d.name}:{d.kind}' for d in self.dimensions)})"

    @property
    def size(self) -> int:
        return math.prod(len(d.values) for d in self.dimensions)

    @property
    def width(self) -> int:
        return sum(d.width for d in self.dimensions)

    def config(self, values) -> HparamConfig:
        if isinstance(values, dict):
            missing = set(self.names) - set(values)
            extra = set(values) - set(self.names)
            if missing or extra:
                raise ValueError(f"config keys mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
            values = [values[n] for n in self.names]
        values = tuple(values)
        if len(values) != len(self.dimensions):
            raise ValueError(f"{len(values)} values for {len(self.dimensions)} dimensions")
        for dim, v in zip(self.dimensions, values):
            dim.encode(v)
        return HparamConfig(self.names, values)

    def at(self, index: int) -> HparamConfig:
        """Mixed-radix decoding; the last dimension varies fastest."""
        if not 0 <= index < self.size:
            raise IndexError(index)
        values = []
        for dim in reversed(self.dimensions):
            index, r = divmod(index, len(dim.values))
            values.append(dim.values[r])
        return HparamConfig(self.names, tuple(reversed(values)))

    def index(self, config: HparamConfig) -> int:
        out = 0
        for dim, v in zip(self.dimensions, config.values):
            out = out * len(dim.values) + dim.values.index(v)
        return out

    def __iter__(self):
        return (self.at(i) for i in range(self.size))

    def to_dict(self) -> dict:
        return {"dimensions": {d.name: d.to_dict() for d in self.dimensions}}

    @classmethod
    def from_dict(cls, data: dict) -> "HparamSpace":
        dims = []
        for name, entry in data.get("dimensions", data).items():
            kind = entry.get("kind")
            if kind == "boolean":
                dims.append(Dimension(name, "boolean"))
            elif kind == "bit_choice":
                dims.append(Dimension(name, kind, tuple(entry.get("options", ()))))
            else:
                dims.append(Dimension(name, kind, tuple(entry.get("values", ()))))
        return cls(dims)

    @classmethod
    def from_toml(cls, path) -> "HparamSpace":
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def to_toml(self) -> str:
        lines = []
        for d in self.dimensions:
            lines.append(f"[dimensions.{d.name}]")
            lines.append(f'kind = "{d.kind}"')
            if d.kind != "boolean":
                key = "options" if d.kind == "bit_choice" else "values"
                lines.append(f"{key} = {json.dumps(list(d.values))}")
            lines.append("")
        return "\n".join(lines)

    def write_toml(self, path) -> None:
        Path(path).write_text(self.to_toml())


def encode(space: HparamSpace, config) -> np.ndarray:
    """One-hot blocks for categorical and boolean dimensions, ``bits / 8`` for bit choices."""
    if not isinstance(config, HparamConfig):
        config = space.config(config)
    if config.names != space.names:
        raise ValueError("config does not belong to this space")
    out: list[float] = []
    for dim, v in zip(space.dimensions, config.values):
        out.extend(dim.encode(v))
    return np.array(out, dtype=np.float64)
