from __future__ import annotations

import time

import numpy as np
import pytest

from app.libs.bench import random_instance
from app.libs.dag_planner import (
    cross_group_conflicts,
    merge_groups,
    plan_step,
    solve_windowed_ecbs_baseline,
)
from app.libs.errors import ContractViolation, PlannerTimeout
from app.libs.executor import Solver, run_episode
from app.libs.grid_world import GridMap, Instance
from app.libs.group_ecbs import GroupSolution
from app.libs.model import AgentGroup, SuboptFactor, validate_plan
from app.libs.penalty_store import PenaltyStore

W1 = SuboptFactor(1)


def _solution(group: AgentGroup, paths: dict) -> GroupSolution:
    return GroupSolution(
        group=group, paths=paths, objective=0, lower_bound=0, cost=0, h_bd=0, incurred_penalty=0, incurred=(), w=W1
    )


def test_merge_groups():
    merged = merge_groups(AgentGroup((3,)), [AgentGroup((0, 2)), AgentGroup((1,))])
    assert merged == AgentGroup((0, 1, 2, 3))
    with pytest.raises(ContractViolation):
        merge_groups(AgentGroup((0, 1)), [AgentGroup((1,))])


def test_independent_agents_stay_apart(open_grid):
    instance = Instance.from_cells(open_grid(3, 3), [(0, 0), (2, 0)], [(0, 2), (2, 2)])
    result = plan_step(instance, instance.starts, PenaltyStore(instance, W1), 2, W1)
    assert result.disjoint_groups == [AgentGroup((0,)), AgentGroup((1,))]
    assert result.merges == 0
    assert result.solve_calls == 2
    assert result.steps[-1] == ((0, 2), (2, 2))


def test_collisions_merge_groups(make_instance):
    # agents 0 and 1 need the bay that agent 2 is parked in
    instance = make_instance(
        [".....", "@@.@@"], [(0, 0), (0, 4), (1, 2)], [(0, 4), (0, 0), (1, 2)], name="crowded-bay"
    )
    result = plan_step(instance, instance.starts, PenaltyStore(instance, W1), 4, W1)
    assert result.disjoint_groups == [AgentGroup((0, 1, 2))]
    assert result.merges == 2
    assert result.solve_calls == 5
    assert result.steps[0] == instance.starts
    validate_plan(instance.grid, result.steps)


def test_penalty_entry_spanning_groups_is_a_conflict(open_grid):
    instance = Instance.from_cells(open_grid(3, 3), [(0, 0), (2, 0)], [(0, 2), (2, 2)])
    store = PenaltyStore(instance, W1)
    candidate = _solution(AgentGroup((0,)), {0: ((0, 0), (0, 1))})
    other = _solution(AgentGroup((1,)), {1: ((2, 0), (2, 1))})
    assert cross_group_conflicts(candidate, [other], store) == []

    base = store.base_value(AgentGroup((0, 1)), [(0, 1), (2, 1)])
    store.raise_to(AgentGroup((0, 1)), [(0, 1), (2, 1)], base + 3)
    assert cross_group_conflicts(candidate, [other], store) == [AgentGroup((1,))]
    # without a store only physical collisions count
    assert cross_group_conflicts(candidate, [other], None) == []


def test_physical_cross_group_collision():
    candidate = _solution(AgentGroup((0,)), {0: ((0, 0), (0, 1))})
    other = _solution(AgentGroup((1,)), {1: ((0, 1), (0, 0))})
    assert cross_group_conflicts(candidate, [other], None) == [AgentGroup((1,))]


def test_baseline_plans_everyone_together(corridor_swap):
    result = solve_windowed_ecbs_baseline(corridor_swap, corridor_swap.starts, 2, SuboptFactor(2))
    assert result.disjoint_groups == [AgentGroup((0, 1))]
    assert result.solve_calls == 1
    validate_plan(corridor_swap.grid, result.steps)


def test_plan_step_deadline(corridor_swap):
    with pytest.raises(PlannerTimeout):
        plan_step(corridor_swap, corridor_swap.starts, None, 2, W1, deadline=time.monotonic() - 1)


@pytest.mark.parametrize("seed", range(6))
def test_merges_and_solve_calls_are_bounded_per_window(seed):
    rng = np.random.default_rng(seed)
    grid = GridMap(blocked=rng.random((5, 5)) < 0.15, name=f"random-{seed}")
    instance = random_instance(grid, 4, rng, name=f"random-{seed}")
    n = instance.num_agents
    result = run_episode(instance, Solver.DAG, 2, "2", iteration_cap=60)
    for record in result.records:
        assert record.merges <= n - 1
        assert record.solve_calls <= 2 * n - 1
        assert record.solve_calls == n + record.merges
        assert sorted(a for g in record.groups for a in g) == list(range(n))
