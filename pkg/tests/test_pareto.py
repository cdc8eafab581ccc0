import itertools
import math

import numpy as np
import pytest

from _instances import random_instance
from mpqplan.costmodel import CostBudget, CostTable, plan_cost
from mpqplan.pareto import (
    FRONTIER_HEADER, FrontierPoint, SpaceCount, bit_space_size, frontier, non_dominated, read_frontier_csv,
    schedule_space_size, select, stirling2_row, write_frontier_csv,
)
from mpqplan.planner import BitPlan, IlpInstance, InfeasibleBudget
from mpqplan.sensitivity import SensitivityProfile


def _all_vectors(inst, objectives):
    L, m = inst.profile.delta.shape
    out = {}
    for ch in itertools.product(range(m), repeat=L):
        v = [math.fsum(inst.profile.delta[i, c] for i, c in enumerate(ch))]
        v += [math.fsum(inst.table.matrix(k)[i, c] for i, c in enumerate(ch)) for k in objectives]
        out[ch] = tuple(v)
    return out


def _global_front(vectors):
    """Quadratic dominance scan; equal vectors keep the higher-bits (larger index) plan."""
    items = list(vectors.items())
    keep = set()
    for ch, v in items:
        dominated = False
        for ch2, w in items:
            if ch2 == ch:
                continue
            if all(a <= b for a, b in zip(w, v)) and (w != v or ch2 > ch):
                dominated = True
                break
        if not dominated:
            keep.add(ch)
    return keep


def _choice(inst, plan):
    return tuple(inst.profile.bit_options.index(b) for b in plan.bits)


def _assert_pairwise_nondominated(points, objectives):
    vecs = [(p.perturbation, *[p.cost.get(k) for k in objectives]) for p in points]
    for i, v in enumerate(vecs):
        for j, w in enumerate(vecs):
            if i != j:
                assert not (all(a <= b for a, b in zip(w, v)) and w != v)
                assert w != v


@pytest.mark.parametrize("seed", range(12))
def test_single_objective_equals_global_front(seed):
    inst = random_instance(np.random.default_rng(seed), 5, 3, 0)
    pts = frontier(inst, ["size"])
    want = _global_front(_all_vectors(inst, ["size"]))
    assert {_choice(inst, p.plan) for p in pts} == want
    assert [p.perturbation for p in pts] == sorted(p.perturbation for p in pts)


@pytest.mark.parametrize("seed", range(8))
def test_two_objectives_sound(seed):
    inst = random_instance(np.random.default_rng(50 + seed), 5, 3, 0)
    objectives = ["size", "latency"]
    pts = frontier(inst, objectives)
    _assert_pairwise_nondominated(pts, objectives)
    vectors = _all_vectors(inst, objectives)
    front = _global_front(vectors)
    got = {_choice(inst, p.plan) for p in pts}
    assert got <= front
    # endpoints: perturbation-minimal and each cost-minimal plan
    for axis in range(3):
        best = min(v[axis] for v in vectors.values())
        ends = {ch for ch in front if vectors[ch][axis] == best}
        assert got & ends


def test_single_layer_both_plans():
    prof = SensitivityProfile(["x"], [4, 8], np.array([[1.0, 0.1]]), [1.0], [1])
    table = CostTable(["x"], [4, 8], np.array([[0.5, 1.0]]), np.array([[1.0, 2.0]]), None, 8, [1], [1])
    pts = frontier(IlpInstance(prof, table))
    assert [p.plan.bits for p in pts] == [[8], [4]]


def test_total_dominance_single_point():
    prof = SensitivityProfile(["x", "y"], [4, 8], np.array([[0.0, 1.0], [0.0, 1.0]]), [1.0, 1.0], [1, 1])
    table = CostTable(["x", "y"], [4, 8], np.array([[0.5, 1.0]] * 2), np.array([[1.0, 2.0]] * 2), None, 8,
                      [1, 1], [1, 1])
    pts = frontier(IlpInstance(prof, table))
    assert len(pts) == 1 and pts[0].plan.bits == [4, 4]


def test_non_dominated_ties_keep_first_tiebreak():
    keep = non_dominated([(1.0, 2.0), (1.0, 2.0), (0.5, 3.0), (2.0, 3.0)], [(-8,), (-4,), (0,), (0,)])
    assert sorted(keep) == [0, 2]


def _point(bits, pert, size):
    return FrontierPoint(BitPlan([(f"l{i}", b) for i, b in enumerate(bits)], pert), pert,
                         plan_cost_stub(size))


def plan_cost_stub(size):
    from mpqplan.costmodel import Cost
    return Cost(size, size, None)


def test_select_examples():
    pts = [_point([8, 8], 0.1, 2.0), _point([4, 4], 1.0, 1.0)]
    assert select(pts, CostBudget(size_limit_mb=2.0)).bits == [8, 8]
    assert select(pts, CostBudget(size_limit_mb=1.5)).bits == [4, 4]
    with pytest.raises(InfeasibleBudget):
        select(pts, CostBudget(size_limit_mb=0.5))
    with pytest.raises(ValueError):
        select([], CostBudget(size_limit_mb=1))


@pytest.mark.parametrize("seed", range(10))
def test_select_matches_scan(seed):
    rng = np.random.default_rng(seed)
    pts = [_point(rng.choice([2, 4, 8], 4).tolist(), float(rng.integers(0, 5)), float(rng.uniform(0, 2)))
           for _ in range(15)]
    budget = CostBudget(size_limit_mb=float(rng.uniform(0.5, 2)))
    feas = [p for p in pts if p.cost.size_mb <= budget.size_limit_mb]
    if not feas:
        return
    ranked = sorted(feas, key=lambda p: (-sum(p.plan.bits), p.perturbation, [-b for b in p.plan.bits]))
    assert select(pts, budget).bits == ranked[0].plan.bits


def test_frontier_csv_roundtrip(tmp_path):
    inst = random_instance(np.random.default_rng(1), 4, 3, 0)
    pts = frontier(inst, ["size", "bops"])
    write_frontier_csv(tmp_path / "f.csv", pts)
    assert (tmp_path / "f.csv").read_text().splitlines()[0] == ",".join(FRONTIER_HEADER)
    again = read_frontier_csv(tmp_path / "f.csv", inst.profile.layer_names)
    assert [(p.plan.bits, p.perturbation, p.cost) for p in again] == [(p.plan.bits, p.perturbation, p.cost) for p in pts]


def _ordered_partitions(items):
    if not items:
        yield []
        return
    n = len(items)
    for mask in range(1, 2**n):
        block = [items[i] for i in range(n) if mask >> i & 1]
        rest = [items[i] for i in range(n) if not mask >> i & 1]
        for tail in _ordered_partitions(rest):
            yield [block, *tail]


def test_schedule_space_matches_enumeration():
    counts = [sum(1 for _ in _ordered_partitions(list(range(L)))) for L in range(1, 8)]
    assert counts == [1, 3, 13, 75, 541, 4683, 47293]
    assert [schedule_space_size(L) for L in range(1, 8)] == counts
    assert schedule_space_size(8) == 545835


def test_counts_big_and_exact():
    assert bit_space_size(3, 4) == 81
    assert bit_space_size(1, 37) == 1
    prod = 1
    for _ in range(50):
        prod *= 4
    assert bit_space_size(4, 50) == prod
    for L in (10, 30, 60):
        assert schedule_space_size(L) >= math.factorial(L)
    assert stirling2_row(4) == [0, 1, 7, 6, 1]
    assert SpaceCount.for_model(3, 4).to_dict() == {"bit_space": 81, "schedule_space": 75}
