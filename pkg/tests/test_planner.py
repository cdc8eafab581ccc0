import numpy as np
import pytest

from _instances import oracle, random_instance
from mpqplan.costmodel import CostBudget, CostTable, check_budget
from mpqplan.planner import BitPlan, IlpInstance, InfeasibleBudget, brute_force, budget_sweep, solve
from mpqplan.sensitivity import SensitivityProfile


def _one_layer(limit):
    prof = SensitivityProfile(["x"], [4, 8], np.array([[1.0, 0.1]]), [1.0], [1])
    table = CostTable(["x"], [4, 8], np.array([[0.5, 1.0]]), np.array([[1.0, 2.0]]), None, 8, [1], [1])
    return IlpInstance(prof, table, CostBudget(size_limit_mb=limit))


def test_one_layer_examples():
    plan = solve(_one_layer(1.0))
    assert plan.bits == [8] and plan.objective == 0.1
    plan = solve(_one_layer(0.6))
    assert plan.bits == [4] and plan.objective == 1.0


def test_infeasible_names_binding_constraint():
    with pytest.raises(InfeasibleBudget) as err:
        solve(_one_layer(0.4))
    assert err.value.binding == ["size"] and err.value.minimum["size"] == 0.5
    with pytest.raises(InfeasibleBudget):
        brute_force(_one_layer(0.4))


@pytest.mark.parametrize("seed", range(40))
def test_matches_exhaustive_six_layers_two_constraints(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, 6, 3, 2)
    ref = oracle(inst)
    if ref is None:
        with pytest.raises(InfeasibleBudget):
            solve(inst)
        return
    plan = solve(inst)
    assert plan.objective == ref[0] and plan.bits == ref[1]
    assert check_budget(plan, inst.table, inst.budget).feasible


@pytest.mark.parametrize("seed", range(20))
def test_ties_prefer_higher_bits(seed):
    inst = random_instance(np.random.default_rng(100 + seed), 5, 3, 1, ties=True)
    ref = oracle(inst)
    if ref is not None:
        assert solve(inst).bits == ref[1] == brute_force(inst).bits


def test_single_option_per_layer():
    rng = np.random.default_rng(0)
    inst = random_instance(rng, 4, 1, 0)
    assert brute_force(inst).bits == [inst.profile.bit_options[0]] * 4 == solve(inst).bits


def test_brute_force_guard():
    inst = random_instance(np.random.default_rng(0), 12, 4, 1)
    with pytest.raises(ValueError):
        brute_force(inst)


def test_eight_by_four_random():
    inst = random_instance(np.random.default_rng(7), 8, 4, 3, tightness=0.4)
    assert solve(inst).objective == brute_force(inst).objective == oracle(inst)[0]


@pytest.mark.parametrize("seed", range(10))
def test_monotone_relaxation_and_scale_invariance(seed):
    rng = np.random.default_rng(200 + seed)
    inst = random_instance(rng, 6, 3, 2, tightness=0.3)
    try:
        tight = solve(inst)
    except InfeasibleBudget:
        return
    loose = solve(inst.with_budget(CostBudget.from_limits({k: v * 1.2 for k, v in inst.limits.items()})))
    assert loose.objective <= tight.objective
    scaled = IlpInstance(
        SensitivityProfile(inst.profile.layer_names, inst.profile.bit_options, inst.profile.delta * 3.7,
                           inst.profile.trace_per_param, inst.profile.param_counts),
        inst.table, inst.budget)
    assert solve(scaled).bits == tight.bits


def test_budget_sweep_non_increasing():
    inst = random_instance(np.random.default_rng(3), 7, 3, 0)
    res = budget_sweep(inst, [0.5, 0.7, 0.9, 1.0], ("size",))
    objs = [r.plan.objective for r in res if r.plan is not None]
    assert objs == sorted(objs, reverse=True)
    assert res[-1].plan.bits == [max(inst.profile.bit_options)] * 7
    with pytest.raises(ValueError):
        budget_sweep(inst, [0.9, 0.5])


def test_budget_sweep_collects_errors():
    inst = random_instance(np.random.default_rng(4), 4, 2, 0)
    res = budget_sweep(inst, [0.01, 1.0], ("size",))
    assert res[0].plan is None and isinstance(res[0].error, InfeasibleBudget)
    assert res[1].plan is not None


def test_plan_json(tmp_path):
    inst = random_instance(np.random.default_rng(5), 3, 2, 1, tightness=1.0)
    plan = solve(inst)
    plan.save(tmp_path / "p.json", inst.table, inst.budget)
    import json
    data = json.loads((tmp_path / "p.json").read_text())
    assert set(data) == {"assignment", "objective", "cost", "budget"}
    assert data["assignment"][0] == {"layer": "l0", "bits": plan.bits[0]}
    again = BitPlan.load(tmp_path / "p.json")
    assert again.assignment == plan.assignment and again.objective == plan.objective


def test_instance_consistency_checked():
    inst = random_instance(np.random.default_rng(6), 3, 2, 0)
    other = SensitivityProfile(["a", "b", "c"], inst.profile.bit_options, inst.profile.delta,
                               inst.profile.trace_per_param, inst.profile.param_counts)
    with pytest.raises(ValueError):
        IlpInstance(other, inst.table)


def test_resnet_scale_solves_fast():
    import time
    from mpqplan.costmodel import budget_at, build_cost_table
    from mpqplan.netlab import resnet50

    table = build_cost_table(resnet50(), [2, 4, 8])
    rng = np.random.default_rng(0)
    L = len(table.layer_names)
    delta = np.sort(rng.exponential(size=(L, 3)), axis=1)[:, ::-1]
    prof = SensitivityProfile(table.layer_names, [2, 4, 8], delta, np.ones(L), table.param_counts)
    start = time.perf_counter()
    plan = solve(IlpInstance(prof, table, budget_at(table, 0.55, ("size", "bops"))))
    assert time.perf_counter() - start < 20
    assert check_budget(plan, table, budget_at(table, 0.55, ("size", "bops"))).feasible
