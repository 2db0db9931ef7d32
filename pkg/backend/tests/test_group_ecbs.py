from __future__ import annotations

import time

import numpy as np
import pytest

from app.libs.bench import random_instance
from app.libs.dag_planner import plan_step
from app.libs.errors import PlannerTimeout
from app.libs.executor import execute_step, update_penalties
from app.libs.grid_world import GridMap
from app.libs.group_ecbs import (
    ConstraintTreeNode,
    CTTrace,
    branch_on_conflict,
    node_objective,
    node_priorities,
    solve_group,
)
from app.libs.low_level_search import AgentPlan, ConstraintKind, FocalRule
from app.libs.model import AgentGroup, Conflict, ConflictKind, SuboptFactor, find_conflicts
from app.libs.oracle import joint_astar
from app.libs.penalty_store import PenaltyEntry, PenaltyStore

PAIR = AgentGroup((0, 1))


def _node(**kwargs) -> ConstraintTreeNode:
    return ConstraintTreeNode(node_id=0, parent_id=None, constraints={}, plans={}, lower_bounds={}, **kwargs)


def test_vertex_branches_forbid_each_agent():
    conflict = Conflict(ConflictKind.VERTEX, (0, 1), 2, ((0, 3),))
    branches = branch_on_conflict(_node(), conflict, 4)
    assert [(b.constraints[0].agent, b.constraints[0].kind) for b in branches] == [
        (0, ConstraintKind.FORBID_VERTEX),
        (1, ConstraintKind.FORBID_VERTEX),
    ]
    assert all(b.constraints[0].cell == (0, 3) and b.constraints[0].timestep == 2 for b in branches)


def test_edge_branches_forbid_each_direction():
    conflict = Conflict(ConflictKind.EDGE, (0, 1), 1, ((0, 1), (0, 2)))
    first, second = branch_on_conflict(_node(), conflict, 4)
    assert (first.constraints[0].agent, first.constraints[0].cell, first.constraints[0].to_cell) == (0, (0, 1), (0, 2))
    assert (second.constraints[0].agent, second.constraints[0].cell, second.constraints[0].to_cell) == (1, (0, 2), (0, 1))


def test_heuristic_branches_avoid_each_member_or_incur():
    entry = PenaltyEntry(PAIR, ((0, 1), (0, 2)), 9, 4)
    conflict = Conflict(ConflictKind.HEURISTIC, PAIR.members, 3, entry.locations, entry)
    branches = branch_on_conflict(_node(), conflict, 3)
    assert len(branches) == 3
    avoid_0, avoid_1, incur = branches
    assert avoid_0.incur is None and avoid_1.incur is None
    assert [(c.agent, c.kind, c.cell, c.timestep) for c in avoid_0.constraints] == [
        (0, ConstraintKind.FORBID_VERTEX, (0, 1), 3)
    ]
    assert [(c.agent, c.kind, c.cell, c.timestep) for c in avoid_1.constraints] == [
        (1, ConstraintKind.FORBID_VERTEX, (0, 2), 3)
    ]
    assert incur.incur is entry
    assert [(c.agent, c.kind, c.cell) for c in incur.constraints] == [
        (0, ConstraintKind.REQUIRE_VERTEX, (0, 1)),
        (1, ConstraintKind.REQUIRE_VERTEX, (0, 2)),
    ]


def test_node_priorities_and_objective():
    plans = {
        0: AgentPlan(0, ((0, 0), (0, 1)), cost=2, h_terminal=1, min_f=3, expanded=0),
        1: AgentPlan(1, ((1, 0), (1, 1)), cost=3, h_terminal=2, min_f=4, expanded=0),
    }
    node = _node(incurred_penalty=2)
    node.plans = plans
    node.lower_bounds = {0: 3, 1: 4}
    w = SuboptFactor(2)
    assert node_priorities(node, w) == (16, (0, 16))
    assert node_priorities(node, w, FocalRule.ECBS) == (14, (0, 14))
    assert node_objective(node, w) == 13
    assert node_objective(node, w, FocalRule.ECBS) == 8


@pytest.mark.parametrize("w", ["1", "3/2", "2"])
def test_solution_is_collision_free_and_bounded(corridor_swap, w):
    w = SuboptFactor.parse(w)
    store = PenaltyStore(corridor_swap, w)
    solution = solve_group(corridor_swap, PAIR, corridor_swap.starts, store, 4, w)
    assert find_conflicts(solution.paths, 4) == []
    assert solution.objective <= solution.lower_bound
    optimum = joint_astar(corridor_swap, PAIR, corridor_swap.starts, 4, w=w, store=store).value
    assert solution.objective <= optimum
    if w == SuboptFactor(1):
        assert solution.objective == optimum


def test_ecbs_rule_ignores_the_store(corridor_swap):
    w = SuboptFactor(2)
    store = PenaltyStore(corridor_swap, w)
    store.raise_to(AgentGroup((0,)), [(0, 1)], 100)
    solution = solve_group(corridor_swap, PAIR, corridor_swap.starts, store, 1, w, rule=FocalRule.ECBS)
    assert solution.incurred == ()
    assert solution.incurred_penalty == 0
    assert find_conflicts(solution.paths, 1) == []


def test_penalty_entry_is_avoided(make_instance):
    instance = make_instance(["...."], [(0, 0)], [(0, 3)])
    w = SuboptFactor(1)
    store = PenaltyStore(instance, w)
    store.raise_to(AgentGroup((0,)), [(0, 1)], 10)
    trace = CTTrace()
    solution = solve_group(instance, AgentGroup((0,)), instance.starts, store, 1, w, trace=trace)
    assert solution.paths[0] == ((0, 0), (0, 0))
    assert solution.objective == 4
    assert solution.incurred == ()
    assert [r.conflict for r in trace.records] == ["heuristic[0]@1:(0,1)", None]
    assert trace.records[1].parent_id == trace.records[0].node_id
    assert solution.objective == joint_astar(instance, AgentGroup((0,)), instance.starts, 1, w=w, store=store).value


def test_penalty_entry_is_incurred_when_cheaper(make_instance):
    instance = make_instance(["...."], [(0, 1)], [(0, 3)])
    w = SuboptFactor(1)
    store = PenaltyStore(instance, w)
    # paying the small entry at (0,2) totals 3; staying or backing off totals 10
    store.raise_to(AgentGroup((0,)), [(0, 2)], 2)
    store.raise_to(AgentGroup((0,)), [(0, 1)], 9)
    store.raise_to(AgentGroup((0,)), [(0, 0)], 9)
    solution = solve_group(instance, AgentGroup((0,)), instance.starts, store, 1, w)
    assert solution.paths[0] == ((0, 1), (0, 2))
    assert [e.locations for e in solution.incurred] == [((0, 2),)]
    assert solution.incurred_penalty == 1
    assert solution.h_terminal == 2
    assert solution.objective == 3


def test_trace_written_as_jsonl(corridor_swap, tmp_path):
    trace = CTTrace()
    solve_group(corridor_swap, PAIR, corridor_swap.starts, None, 2, SuboptFactor(1), trace=trace)
    path = trace.write_jsonl(tmp_path / "trace" / "ct.jsonl")
    assert len(path.read_text().splitlines()) == len(trace.records) >= 1


def test_deadline(corridor_swap):
    with pytest.raises(PlannerTimeout):
        solve_group(corridor_swap, PAIR, corridor_swap.starts, None, 4, SuboptFactor(1), deadline=time.monotonic() - 1)


def _learned(instance, w: SuboptFactor, steps: int):
    """Store and configuration after ``steps`` one-step iterations with a window of 2."""
    store = PenaltyStore(instance, w)
    config = instance.starts
    for _ in range(steps):
        if config == instance.goals:
            break
        planned = plan_step(instance, config, store, 2, w)
        update_penalties(store, config, planned)
        config = execute_step(config, planned)
    return store, config


def _random_instance(seed: int, agents: int = 3):
    rng = np.random.default_rng(seed)
    grid = GridMap(blocked=rng.random((4, 5)) < 0.2, name=f"random-{seed}")
    while len(grid.free_cells()) < 2 * agents:
        grid = GridMap(blocked=rng.random((4, 5)) < 0.2, name=f"random-{seed}")
    return random_instance(grid, agents, rng, name=f"random-{seed}")


@pytest.mark.parametrize("seed", range(8))
def test_anchor_minimum_never_decreases(seed):
    instance = _random_instance(seed)
    w = SuboptFactor(2)
    store, config = _learned(instance, w, 6)
    everyone = AgentGroup(tuple(range(instance.num_agents)))
    trace = CTTrace()
    solution = solve_group(instance, everyone, config, store, 3, w, trace=trace)
    minima = [r.min_anchor for r in trace.records]
    assert minima == sorted(minima)
    assert all(r.min_anchor <= r.f3 for r in trace.records)
    assert solution.lower_bound == minima[-1]


@pytest.mark.parametrize("seed", range(10))
def test_unit_subopt_matches_joint_search_on_random_instances(seed):
    instance = _random_instance(seed, agents=2 + seed % 2)
    w = SuboptFactor(1)
    store, config = _learned(instance, w, 4)
    everyone = AgentGroup(tuple(range(instance.num_agents)))
    solution = solve_group(instance, everyone, config, store, 2, w)
    assert find_conflicts(solution.paths, 2) == []
    expected = joint_astar(instance, everyone, config, 2, w=w, store=store).value
    assert solution.objective == expected
