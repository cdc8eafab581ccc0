"""Per-layer size, BOPs and latency costs, plan totals, and budget checks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .netlab.descriptor import ModelDescriptor

COST_KINDS = ("size", "bops", "latency")

# fractions of the uniform max-bit cost; the three reference budget levels
LEVELS = {"high": 0.9, "medium": 0.7, "low": 0.55}


class MissingLatency(ValueError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        shown = ", ".join(f"({layer}, {bits})" for layer, bits in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" and {len(self.missing) - 10} more"
        super().__init__(f"latency table lacks {len(self.missing)} (layer, bits) pairs: {shown}{more}")


@dataclass
class CostTable:
    layer_names: list[str]
    bit_options: list[int]
    size_mb: np.ndarray
    bops: np.ndarray
    latency: np.ndarray | None
    activation_bits: int
    param_counts: list[int]
    mac_counts: list[int]
    # BN and other non-quantizable parameters, kept at 32 bits
    other_params: int = 0

    def matrix(self, kind: str) -> np.ndarray:
        if kind == "size":
            return self.size_mb
        if kind == "bops":
            return self.bops
        if kind == "latency":
            if self.latency is None:
                raise ValueError("no latency table was supplied; the latency constraint is unavailable")
            return self.latency
        raise ValueError(f"unknown cost kind {kind!r}")

    @property
    def other_size_mb(self) -> float:
        return self.other_params * 32 / 8e6

    def to_dict(self) -> dict:
        return {
            "layer_names": self.layer_names,
            "bit_options": self.bit_options,
            "size_mb": self.size_mb.tolist(),
            "bops": self.bops.tolist(),
            "latency": None if self.latency is None else self.latency.tolist(),
            "activation_bits": self.activation_bits,
            "param_counts": self.param_counts,
            "mac_counts": self.mac_counts,
            "other_params": self.other_params,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CostTable":
        lat = data.get("latency")
        return cls(
            list(data["layer_names"]),
            [int(b) for b in data["bit_options"]],
            np.asarray(data["size_mb"], dtype=np.float64),
            np.asarray(data["bops"], dtype=np.float64),
            None if lat is None else np.asarray(lat, dtype=np.float64),
            int(data["activation_bits"]),
            [int(n) for n in data["param_counts"]],
            [int(n) for n in data["mac_counts"]],
            int(data.get("other_params", 0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "CostTable":
        return cls.from_dict(json.loads(Path(path).read_text()))


def load_latency_csv(path) -> dict[tuple[str, int], float]:
    """Read a ``layer,bits,latency`` table (relative units)."""
    with open(path, newline="") as fh:
        rows = [row for row in fh if not row.lstrip().startswith("#")]
    reader = csv.DictReader(rows)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["layer", "bits", "latency"]:
        raise ValueError(f"{path}: header must be exactly 'layer,bits,latency'")
    table = {}
    for row in reader:
        value = float(row["latency"])
        if value < 0:
            raise ValueError(f"{path}: negative latency for {row['layer']} at {row['bits']} bits")
        table[(row["layer"].strip(), int(row["bits"]))] = value
    return table


def build_cost_table(
    descriptor: ModelDescriptor,
    bit_options,
    activation_bits: int = 8,
    latency=None,
) -> CostTable:
    """Cost matrices for every quantizable layer and bit option.

    ``latency`` is a path to a latency CSV or an already-loaded mapping
    ``(layer, bits) -> latency``; latency is never estimated.
    """
    bit_options = [int(b) for b in bit_options]
    if not bit_options:
        raise ValueError("bit_options must be non-empty")
    layers = descriptor.quantizable
    names = [layer.name for layer in layers]
    params = np.array([layer.param_count for layer in layers], dtype=np.float64)
    macs = np.array([layer.mac_count for layer in layers], dtype=np.float64)
    bits = np.array(bit_options, dtype=np.float64)
    size = np.outer(params, bits) / 8e6
    bops = np.outer(macs, bits) * activation_bits / 1e9
    lat = None
    if latency is not None:
        entries = load_latency_csv(latency) if isinstance(latency, (str, Path)) else dict(latency)
        missing = [(n, b) for n in names for b in bit_options if (n, b) not in entries]
        if missing:
            raise MissingLatency(missing)
        lat = np.array([[entries[(n, b)] for b in bit_options] for n in names], dtype=np.float64)
    other = descriptor.total_params() - descriptor.total_params(quantizable_only=True)
    return CostTable(names, bit_options, size, bops, lat, activation_bits,
                     [layer.param_count for layer in layers], [layer.mac_count for layer in layers], other)


@dataclass(frozen=True)
class Cost:
    size_mb: float
    bops: float
    latency: float | None

    def get(self, kind: str) -> float | None:
        return {"size": self.size_mb, "bops": self.bops, "latency": self.latency}[kind]

    def to_dict(self) -> dict:
        return {"size_mb": self.size_mb, "bops": self.bops, "latency": self.latency}


@dataclass(frozen=True)
class CostBudget:
    size_limit_mb: float | None = None
    bops_limit: float | None = None
    latency_limit: float | None = None

    def __post_init__(self):
        if self.size_limit_mb is None and self.bops_limit is None and self.latency_limit is None:
            raise ValueError("a budget needs at least one limit")
        for name in ("size_limit_mb", "bops_limit", "latency_limit"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be > 0")

    def limits(self) -> dict[str, float]:
        """Active constraints keyed by cost kind."""
        pairs = (("size", self.size_limit_mb), ("bops", self.bops_limit), ("latency", self.latency_limit))
        return {kind: float(v) for kind, v in pairs if v is not None}

    @classmethod
    def from_limits(cls, limits: dict[str, float]) -> "CostBudget":
        return cls(limits.get("size"), limits.get("bops"), limits.get("latency"))

    def to_dict(self) -> dict:
        return {"size_limit_mb": self.size_limit_mb, "bops_limit": self.bops_limit,
                "latency_limit": self.latency_limit}

    @classmethod
    def from_dict(cls, data: dict) -> "CostBudget":
        return cls(data.get("size_limit_mb"), data.get("bops_limit"), data.get("latency_limit"))


def plan_bits(plan, table: CostTable) -> list[int]:
    """Bit list in table layer order from a BitPlan, a mapping, or a sequence."""
    if hasattr(plan, "assignment"):
        plan = plan.assignment
    if isinstance(plan, dict):
        pairs = list(plan.items())
    elif plan and isinstance(plan[0], (tuple, list)):
        pairs = [(name, b) for name, b in plan]
    else:
        pairs = list(zip(table.layer_names, plan))
        if len(pairs) != len(table.layer_names) or len(plan) != len(table.layer_names):
            raise ValueError(f"plan has {len(plan)} entries for {len(table.layer_names)} layers")
    if [name for name, _ in pairs] != table.layer_names:
        raise ValueError("plan layers do not match the cost table layers")
    bits = [int(b) for _, b in pairs]
    bad = sorted({b for b in bits if b not in table.bit_options})
    if bad:
        raise ValueError(f"bit-widths {bad} are not among the table options {table.bit_options}")
    return bits


def plan_cost(plan, table: CostTable) -> Cost:
    bits = plan_bits(plan, table)
    cols = [table.bit_options.index(b) for b in bits]
    rows = range(len(cols))
    size = math.fsum(table.size_mb[i, j] for i, j in zip(rows, cols))
    bops = math.fsum(table.bops[i, j] for i, j in zip(rows, cols))
    lat = None if table.latency is None else math.fsum(table.latency[i, j] for i, j in zip(rows, cols))
    return Cost(size, bops, lat)


def uniform_cost(table: CostTable, bits: int) -> Cost:
    return plan_cost([bits] * len(table.layer_names), table)


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    cost: Cost
    slack: dict[str, float]

    @property
    def violated(self) -> list[str]:
        return [kind for kind, s in self.slack.items() if s < 0]


def check_budget(plan, table: CostTable, budget: CostBudget) -> FeasibilityReport:
    """Slack (limit minus cost) for each active constraint."""
    cost = plan_cost(plan, table)
    slack = {}
    for kind, limit in budget.limits().items():
        value = cost.get(kind)
        if value is None:
            raise ValueError("budget limits latency but the cost table has no latency data")
        slack[kind] = limit - value
    return FeasibilityReport(all(cost.get(k) <= lim for k, lim in budget.limits().items()), cost, slack)


def budget_at(table: CostTable, fraction: float, kinds=("size",)) -> CostBudget:
    """Budget at ``fraction`` of the uniform max-bit cost for each listed cost kind."""
    top = uniform_cost(table, max(table.bit_options))
    return CostBudget.from_limits({kind: fraction * top.get(kind) for kind in kinds})
