"""Sensitivity-vs-cost Pareto frontier, final plan selection, and search-space counts."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from .costmodel import Cost, CostBudget, CostTable, budget_at, plan_cost
from .planner import BitPlan, IlpInstance, InfeasibleBudget, solve

log = logging.getLogger(__name__)

FRONTIER_HEADER = ["perturbation", "size_mb", "bops", "latency", "bits_csv"]
DEFAULT_FRACTIONS = (0.55, 0.7, 0.9, 1.0)


@dataclass
class FrontierPoint:
    plan: BitPlan
    perturbation: float
    cost: Cost


def _objective_vector(instance: IlpInstance, choice, objectives) -> tuple[float, ...]:
    delta = instance.profile.delta
    out = [math.fsum(delta[i, c] for i, c in enumerate(choice))]
    for kind in objectives:
        mat = instance.table.matrix(kind)
        out.append(math.fsum(mat[i, c] for i, c in enumerate(choice)))
    return tuple(out)


def non_dominated(vectors: list[tuple], tiebreak: list[tuple]) -> list[int]:
    """Indices of the minimal vectors (all objectives minimized).

    Of several exactly equal vectors only the one with the smallest
    ``tiebreak`` survives.
    """
    order = sorted(range(len(vectors)), key=lambda i: (vectors[i], tiebreak[i]))
    kept: list[int] = []
    kept_arr = np.empty((0, len(vectors[0]) if vectors else 0))
    for i in order:
        v = np.asarray(vectors[i])
        if kept_arr.size and np.any(np.all(kept_arr <= v, axis=1)):
            continue
        kept.append(i)
        kept_arr = np.vstack([kept_arr, v])
    return kept


def _choice_of(instance: IlpInstance, plan: BitPlan) -> tuple[int, ...]:
    opts = instance.profile.bit_options
    return tuple(opts.index(b) for b in plan.bits)


def _try(instance: IlpInstance, budget: CostBudget | None):
    try:
        return solve(instance.with_budget(budget))
    except InfeasibleBudget:
        return None


def candidate_pool(
    instance: IlpInstance,
    objectives=("size",),
    sweep_fractions=DEFAULT_FRACTIONS,
    local_moves: int = 2,
    max_chain: int = 256,
    max_pool: int = 50_000,
) -> list[tuple[int, ...]]:
    """Option-index tuples explored by :func:`frontier`.

    Seeds: the unconstrained optimum and, for each cost objective, the ILP
    optimum at every sweep fraction of the uniform max-bit cost, at the
    minimum achievable cost, and along the chain of ILP solutions with
    strictly decreasing cost (the exact sensitivity-vs-that-cost frontier,
    capped at ``max_chain`` points). Each seed is then expanded by up to
    ``local_moves`` single-layer bit-width changes.
    """
    objectives = tuple(objectives)
    if not objectives:
        raise ValueError("at least one cost objective is required")
    for kind in objectives:
        instance.table.matrix(kind)
    L, m = instance.profile.delta.shape

    seeds: dict[tuple[int, ...], None] = {}

    def add(plan):
        if plan is not None:
            seeds.setdefault(_choice_of(instance, plan), None)

    top = _try(instance, None)
    add(top)
    for kind in objectives:
        for fraction in sweep_fractions:
            add(_try(instance, budget_at(instance.table, fraction, (kind,))))
        cheapest = math.fsum(instance.table.matrix(kind).min(axis=1))
        if cheapest > 0:
            add(_try(instance, CostBudget.from_limits({kind: cheapest})))
        plan = top
        for _ in range(max_chain):
            if plan is None:
                break
            limit = math.nextafter(plan_cost(plan, instance.table).get(kind), -math.inf)
            if limit <= 0:
                break
            plan = _try(instance, CostBudget.from_limits({kind: limit}))
            add(plan)

    pool = dict(seeds)
    layer = list(seeds)
    for _ in range(local_moves):
        nxt = []
        for choice in layer:
            for i in range(L):
                for j in range(m):
                    if j == choice[i]:
                        continue
                    cand = choice[:i] + (j,) + choice[i + 1 :]
                    if cand not in pool:
                        pool[cand] = None
                        nxt.append(cand)
            if len(pool) >= max_pool:
                break
        layer = nxt
        if len(pool) >= max_pool:
            log.warning("local-move pool capped at %d plans", max_pool)
            break
    return list(pool)


def frontier(
    instance: IlpInstance,
    objectives=("size",),
    sweep_fractions=DEFAULT_FRACTIONS,
    local_moves: int = 2,
    max_chain: int = 256,
    max_pool: int = 50_000,
) -> list[FrontierPoint]:
    """Non-dominated members of :func:`candidate_pool`, by perturbation ascending.

    Objectives are the total sensitivity plus each listed cost. With one
    cost objective the result is the exact global frontier (up to
    ``max_chain`` points).
    """
    objectives = tuple(objectives)
    choices = candidate_pool(instance, objectives, sweep_fractions, local_moves, max_chain, max_pool)
    if not choices:
        log.warning("every ILP seed was infeasible; the frontier is empty")
        return []
    opts = instance.profile.bit_options
    vectors = [_objective_vector(instance, ch, objectives) for ch in choices]
    neg_bits = [tuple(-opts[c] for c in ch) for ch in choices]
    keep = non_dominated(vectors, neg_bits)
    names = instance.profile.layer_names
    points = []
    for i in keep:
        ch = choices[i]
        plan = BitPlan([(n, opts[c]) for n, c in zip(names, ch)], vectors[i][0])
        points.append(FrontierPoint(plan, vectors[i][0], plan_cost(plan, instance.table)))
    points.sort(key=lambda p: (p.perturbation, [-b for b in p.plan.bits]))
    return points


def select(points: list[FrontierPoint], budget: CostBudget, table: CostTable | None = None) -> BitPlan:
    """The feasible frontier plan with the most total bits.

    Ties go to lower perturbation, then the lexicographically higher bit list.
    """
    if not points:
        raise ValueError("empty frontier")
    limits = budget.limits()
    feasible = []
    costs = [p.cost if p.cost is not None else plan_cost(p.plan, table) for p in points]
    for p, cost in zip(points, costs):
        if all(cost.get(k) is not None and cost.get(k) <= lim for k, lim in limits.items()):
            feasible.append(p)
    if not feasible:
        minimum = {k: min(c.get(k) for c in costs if c.get(k) is not None) for k in limits
                   if any(c.get(k) is not None for c in costs)}
        binding = [k for k in minimum if minimum[k] > limits[k]]
        raise InfeasibleBudget(binding or list(minimum), minimum, limits, jointly=not binding)
    best = min(feasible, key=lambda p: (-sum(p.plan.bits), p.perturbation, [-b for b in p.plan.bits]))
    return best.plan


def write_frontier_csv(path, points: list[FrontierPoint]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FRONTIER_HEADER)
        for p in points:
            lat = "" if p.cost.latency is None else repr(p.cost.latency)
            writer.writerow([repr(p.perturbation), repr(p.cost.size_mb), repr(p.cost.bops), lat,
                             ",".join(str(b) for b in p.plan.bits)])


def read_frontier_csv(path, layer_names=None) -> list[FrontierPoint]:
    points = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != FRONTIER_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            pert, size, bops, lat, bits = row
            bits = [int(b) for b in bits.split(",")]
            names = layer_names or [f"layer{i}" for i in range(len(bits))]
            plan = BitPlan(list(zip(names, bits)), float(pert))
            points.append(FrontierPoint(plan, float(pert), Cost(float(size), float(bops), float(lat) if lat else None)))
    return points


def bit_space_size(m: int, L: int) -> int:
    """Number of per-layer bit assignments, ``m ** L``."""
    if m < 1 or L < 1:
        raise ValueError("m and L must be >= 1")
    return m**L


def stirling2_row(n: int) -> list[int]:
    """``[S(n, 0), ..., S(n, n)]`` via ``S(n,k) = k S(n-1,k) + S(n-1,k-1)``."""
    row = [1]
    for i in range(1, n + 1):
        new = [0] * (i + 1)
        for k in range(1, i + 1):
            new[k] = k * (row[k] if k < len(row) else 0) + row[k - 1]
        row = new
    return row


def schedule_space_size(L: int) -> int:
    """Ordered set partitions of ``L`` layers: ``sum_i i! S(L, i)`` (Fubini number)."""
    if L < 1:
        raise ValueError("L must be >= 1")
    row = stirling2_row(L)
    return sum(math.factorial(i) * row[i] for i in range(1, L + 1))


@dataclass(frozen=True)
class SpaceCount:
    bit_space: int
    schedule_space: int

    @classmethod
    def for_model(cls, m: int, L: int) -> "SpaceCount":
        return cls(bit_space_size(m, L), schedule_space_size(L))

    def to_dict(self) -> dict:
        return {"bit_space": self.bit_space, "schedule_space": self.schedule_space}
