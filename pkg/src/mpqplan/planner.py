"""Exact bit-width allocation: a multiple-choice knapsack with up to three budgets.

Both :func:`solve` (branch and bound) and :func:`brute_force` (enumeration)
judge a plan by the same canonical rules, so they agree exactly:

* objective = ``math.fsum`` of the chosen sensitivities;
* feasible  = ``math.fsum`` of each chosen cost column ``<=`` its limit;
* ties on the objective go to the lexicographically higher bit list.

Floating-point bounds inside the search are only used with a safety margin,
so pruning never discards a plan the canonical rules would prefer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .costmodel import COST_KINDS, CostBudget, CostTable, budget_at, plan_cost
from .sensitivity import SensitivityProfile

BRUTE_FORCE_LIMIT = 10**7


@dataclass
class BitPlan:
    assignment: list[tuple[str, int]]
    objective: float

    @property
    def bits(self) -> list[int]:
        return [b for _, b in self.assignment]

    @property
    def layer_names(self) -> list[str]:
        return [name for name, _ in self.assignment]

    def to_dict(self, table: CostTable | None = None, budget: CostBudget | None = None) -> dict:
        out = {
            "assignment": [{"layer": name, "bits": int(b)} for name, b in self.assignment],
            "objective": self.objective,
        }
        if table is not None:
            out["cost"] = plan_cost(self, table).to_dict()
        if budget is not None:
            out["budget"] = budget.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "BitPlan":
        return cls([(item["layer"], int(item["bits"])) for item in data["assignment"]], float(data["objective"]))

    def save(self, path, table=None, budget=None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(table, budget), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "BitPlan":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class IlpInstance:
    profile: SensitivityProfile
    table: CostTable
    budget: CostBudget | None = None

    def __post_init__(self):
        if list(self.profile.layer_names) != list(self.table.layer_names):
            raise ValueError("profile and cost table list different layers")
        if list(self.profile.bit_options) != list(self.table.bit_options):
            raise ValueError("profile and cost table use different bit options")
        if self.budget is not None and "latency" in self.budget.limits() and self.table.latency is None:
            raise ValueError("budget limits latency but the cost table has no latency data")

    @property
    def limits(self) -> dict[str, float]:
        return {} if self.budget is None else self.budget.limits()

    def with_budget(self, budget: CostBudget | None) -> "IlpInstance":
        return IlpInstance(self.profile, self.table, budget)


class InfeasibleBudget(ValueError):
    """No plan satisfies the budget.

    ``binding`` names the constraints that even the cheapest plan for that
    cost violates; when empty-handed individually, all active constraints
    are reported as jointly infeasible.
    """

    def __init__(self, binding: list[str], minimum: dict[str, float], limits: dict[str, float], jointly=False):
        self.binding = binding
        self.minimum = minimum
        self.limits = limits
        self.jointly = jointly
        parts = [f"{k}: needs >= {minimum[k]:.6g}, limit {limits[k]:.6g}" for k in binding]
        prefix = "constraints are jointly infeasible" if jointly else "budget infeasible"
        super().__init__(f"{prefix} ({'; '.join(parts)})")

    def to_dict(self) -> dict:
        return {"binding": self.binding, "minimum": self.minimum, "limits": self.limits, "jointly": self.jointly}


def _tables(instance: IlpInstance):
    delta = instance.profile.delta
    costs = {kind: instance.table.matrix(kind) for kind in instance.limits}
    return delta, costs


def _plan(instance: IlpInstance, choice) -> BitPlan:
    opts = instance.profile.bit_options
    delta = instance.profile.delta
    objective = math.fsum(delta[i, c] for i, c in enumerate(choice))
    return BitPlan([(name, opts[c]) for name, c in zip(instance.profile.layer_names, choice)], objective)


def _key(instance: IlpInstance, choice) -> tuple:
    delta = instance.profile.delta
    opts = instance.profile.bit_options
    return (math.fsum(delta[i, c] for i, c in enumerate(choice)), tuple(-opts[c] for c in choice))


def _feasible(costs, limits, choice) -> bool:
    return all(math.fsum(costs[k][i, c] for i, c in enumerate(choice)) <= limits[k] for k in limits)


def _infeasibility(instance: IlpInstance) -> InfeasibleBudget:
    _, costs = _tables(instance)
    limits = instance.limits
    minimum = {k: math.fsum(costs[k].min(axis=1)) for k in limits}
    binding = [k for k in limits if minimum[k] > limits[k]]
    if binding:
        return InfeasibleBudget(binding, minimum, limits)
    return InfeasibleBudget(list(limits), minimum, limits, jointly=True)


def _margin(*arrays) -> float:
    """Slack for float comparisons of sums drawn from ``arrays``."""
    scale = 1.0
    n = 1
    for a in arrays:
        a = np.abs(np.asarray(a, dtype=np.float64))
        if a.size:
            scale += float(a.max(axis=-1).sum()) if a.ndim > 1 else float(a.sum())
            n = max(n, a.shape[0])
    return 64 * n * np.finfo(np.float64).eps * scale


def brute_force(instance: IlpInstance) -> BitPlan:
    """Exhaustive optimum over all m^L plans (guarded at 10^7 plans)."""
    delta, costs = _tables(instance)
    L, m = delta.shape
    if m**L > BRUTE_FORCE_LIMIT:
        raise ValueError(f"{m}^{L} plans exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")
    limits = instance.limits
    choices = np.indices((m,) * L).reshape(L, -1).T
    rows = np.arange(L)
    ok = np.ones(len(choices), dtype=bool)
    unsure = np.zeros(len(choices), dtype=bool)
    for k, limit in limits.items():
        totals = costs[k][rows, choices].sum(axis=1)
        tol = _margin(costs[k])
        ok &= totals <= limit + tol
        unsure |= np.abs(totals - limit) <= tol
    for idx in np.flatnonzero(ok & unsure):
        ok[idx] = _feasible(costs, limits, choices[idx])
    candidates = np.flatnonzero(ok)
    if candidates.size == 0:
        raise _infeasibility(instance)
    objectives = delta[rows, choices[candidates]].sum(axis=1)
    near = candidates[objectives <= objectives.min() + _margin(delta)]
    best = min((tuple(choices[i]) for i in near), key=lambda ch: _key(instance, ch))
    return _plan(instance, best)


def _hull_segments(delta_row, cost_row, options):
    """Lower-left convex hull of one layer's (cost, sensitivity) options.

    Returns the cheapest option's ``(cost, delta)`` and the hull segments
    ``(d_cost, d_delta)`` walking towards lower sensitivity; efficiencies
    ``d_delta / d_cost`` decrease along the list.
    """
    pts = sorted({(cost_row[j], delta_row[j]) for j in options})
    # cheapest cost, lowest delta among equally cheap
    start = pts[0]
    hull = [start]
    for c, d in pts[1:]:
        if d >= hull[-1][1]:
            continue
        while len(hull) >= 2:
            (c1, d1), (c2, d2) = hull[-2], hull[-1]
            # drop the middle point when it lies on or above the chord
            if (d2 - d1) * (c - c1) >= (d - d1) * (c2 - c1):
                hull.pop()
            else:
                break
        hull.append((c, d))
    segs = [(c2 - c1, d1 - d2) for (c1, d1), (c2, d2) in zip(hull[:-1], hull[1:])]
    return start, segs


class _LpBound:
    """LP-relaxation bound for one knapsack constraint over the layers still free.

    For the free suffix starting at search depth ``i`` the relaxation takes
    every layer's cheapest option and buys hull segments greedily by
    efficiency, the last one fractionally.
    """

    def __init__(self, delta, cost, options, order):
        L = len(order)
        starts, segments = [], []
        for depth, t in enumerate(order):
            (c0, d0), segs = _hull_segments(delta[t], cost[t], options[t])
            starts.append((c0, d0))
            for dc, dd in segs:
                segments.append((dd / dc if dc > 0 else math.inf, depth, dc, dd))
        segments.sort(key=lambda s: -s[0])
        c0 = np.array([s[0] for s in starts])
        d0 = np.array([s[1] for s in starts])
        self.base_cost = np.concatenate([np.cumsum(c0[::-1])[::-1], [0.0]])
        self.base_delta = np.concatenate([np.cumsum(d0[::-1])[::-1], [0.0]])
        self.cum_cost, self.cum_gain, self.eff = [], [], []
        for i in range(L + 1):
            free = [s for s in segments if s[1] >= i]
            self.cum_cost.append(np.cumsum([s[2] for s in free]))
            self.cum_gain.append(np.cumsum([s[3] for s in free]))
            self.eff.append(np.array([s[0] for s in free]))

    def __call__(self, depth: int, budget_left: float) -> float:
        """Lower bound on the free layers' sensitivity given ``budget_left``."""
        room = budget_left - self.base_cost[depth]
        if room < 0:
            return math.inf
        cum_cost = self.cum_cost[depth]
        base = self.base_delta[depth]
        if cum_cost.size == 0:
            return base
        j = int(np.searchsorted(cum_cost, room, side="right"))
        if j == cum_cost.size:
            return base - self.cum_gain[depth][-1]
        gain = self.cum_gain[depth][j - 1] if j else 0.0
        spent = cum_cost[j - 1] if j else 0.0
        eff = self.eff[depth][j]
        if math.isfinite(eff):
            gain += (room - spent) * eff
        return base - gain


def solve(instance: IlpInstance) -> BitPlan:
    """Globally optimal plan by depth-first branch and bound over layers.

    Bounds per node: the sum of per-layer minimum sensitivities, and for
    each active constraint the LP relaxation of the remaining knapsack.
    """
    delta, costs = _tables(instance)
    L, m = delta.shape
    limits = instance.limits
    kinds = list(limits)
    bits = instance.profile.bit_options

    # drop options another option beats in sensitivity, every active cost and
    # bit-width at once; this never changes the optimum or its tie-break
    options = []
    for i in range(L):
        keep = []
        for a in range(m):
            dominated = any(
                b != a
                and delta[i, b] <= delta[i, a]
                and bits[b] >= bits[a]
                and all(costs[k][i, b] <= costs[k][i, a] for k in kinds)
                for b in range(m)
            )
            if not dominated:
                keep.append(a)
        # try low-sensitivity, then high-bit options first
        options.append(sorted(keep, key=lambda j: (delta[i, j], -bits[j])))

    # branch on the layers whose choice matters most first
    spread = [max(delta[i, j] for j in options[i]) - min(delta[i, j] for j in options[i]) for i in range(L)]
    order = sorted(range(L), key=lambda i: (-spread[i], i))

    min_delta = np.array([min(delta[t, j] for j in options[t]) for t in order])
    suffix_delta = np.concatenate([np.cumsum(min_delta[::-1])[::-1], [0.0]])
    lp = {k: _LpBound(delta, costs[k], options, order) for k in kinds}
    tol = _margin(delta)
    cost_tol = {k: _margin(costs[k]) for k in kinds}
    if any(lp[k](0, limits[k] + cost_tol[k]) == math.inf for k in kinds):
        raise _infeasibility(instance)

    best_key = None
    best_choice = None
    choice = [0] * L

    def visit(depth, partial_delta, partial_cost):
        nonlocal best_key, best_choice
        if depth == L:
            if not _feasible(costs, limits, choice):
                return
            key = _key(instance, choice)
            if best_key is None or key < best_key:
                best_key, best_choice = key, list(choice)
            return
        t = order[depth]
        for j in options[t]:
            d = partial_delta + delta[t, j]
            pc = {k: partial_cost[k] + costs[k][t, j] for k in kinds}
            bound = d + suffix_delta[depth + 1]
            for k in kinds:
                bound = max(bound, d + lp[k](depth + 1, limits[k] + cost_tol[k] - pc[k]))
            if bound == math.inf:
                continue
            if best_key is not None and bound > best_key[0] + tol:
                continue
            choice[t] = j
            visit(depth + 1, d, pc)

    visit(0, 0.0, {k: 0.0 for k in kinds})
    if best_choice is None:
        raise _infeasibility(instance)
    return _plan(instance, best_choice)


@dataclass
class SweepResult:
    fraction: float
    plan: BitPlan | None
    error: InfeasibleBudget | None = None


def budget_sweep(instance: IlpInstance, fractions, kinds=None) -> list[SweepResult]:
    """Solve once per fraction of the uniform max-bit cost.

    ``kinds`` defaults to the constraints active in ``instance.budget``
    (model size if it has none).
    """
    fractions = list(fractions)
    if fractions != sorted(fractions):
        raise ValueError("fractions must be sorted ascending")
    if kinds is None:
        kinds = tuple(instance.limits) or ("size",)
    for kind in kinds:
        if kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {kind!r}")
    results = []
    for fraction in fractions:
        sub = instance.with_budget(budget_at(instance.table, fraction, kinds))
        try:
            results.append(SweepResult(fraction, solve(sub)))
        except InfeasibleBudget as exc:
            results.append(SweepResult(fraction, None, exc))
    return results
