"""Exhaustive joint-state search and the checks built on it.

Only meant for desk-scale instances: a handful of agents on small grids.
Anything bigger is refused rather than approximated.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass
from itertools import count, product
from pathlib import Path
from typing import Iterable, Sequence

from pydantic import BaseModel, ConfigDict, Field

from app.libs.errors import OracleRefusal
from app.libs.grid_world import Cell, Instance, neighbors
from app.libs.group_ecbs import GroupSolution
from app.libs.model import AgentGroup, SuboptFactor, transition_cost
from app.libs.penalty_store import PenaltyStore

logger = logging.getLogger(__name__)

DEFAULT_MAX_AGENTS = 4
DEFAULT_MAX_STATES = 20_000_000


@dataclass(frozen=True)
class OracleResult:
    """``value`` is None when the goals cannot be reached jointly."""

    value: int | None
    path: tuple[tuple[Cell, ...], ...] = ()


class VerificationRecord(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    check: str
    instance: str
    group: list[int]
    expected: int = Field(..., description="Bound the actual value must not exceed")
    actual: int
    passed: bool = Field(..., serialization_alias="pass")
    detail: str | None = None


class GapRecord(BaseModel):
    optimal_costs: list[int]
    plan_costs: list[int]
    subopt: str
    global_cost: int
    global_bound: str
    global_pass: bool
    group_pass: list[bool]


def _joint_moves(grid, locs: tuple[Cell, ...]) -> Iterable[tuple[Cell, ...]]:
    for nxt in product(*(neighbors(grid, cell) for cell in locs)):
        if len(set(nxt)) != len(nxt):
            continue
        swap = False
        for i in range(len(locs)):
            if nxt[i] == locs[i]:
                continue
            for j in range(len(locs)):
                if j != i and nxt[i] == locs[j] and nxt[j] == locs[i]:
                    swap = True
                    break
            if swap:
                break
        if not swap:
            yield nxt


def joint_astar(
    instance: Instance,
    group: AgentGroup,
    start: Sequence[Cell],
    horizon: int | None = None,
    *,
    w: SuboptFactor | None = None,
    store: PenaltyStore | None = None,
    max_agents: int = DEFAULT_MAX_AGENTS,
    max_states: int = DEFAULT_MAX_STATES,
) -> OracleResult:
    """Optimal group search ignoring non-members.

    Without ``horizon`` the value is the optimal sum of cost to the goals. With a
    horizon it is the least c(C^0, C^W) + Σ h^BD(C^W); passing ``w`` scales that to
    w·(c + h^BD), and passing ``store`` as well adds the terminal penalty packing.
    """
    members = group.members
    if len(members) > max_agents:
        raise OracleRefusal(f"Oracle handles at most {max_agents} agents, got {len(members)}")
    free = len(instance.grid.free_cells())
    if free ** len(members) > max_states:
        raise OracleRefusal(f"{free}^{len(members)} joint states exceed the limit of {max_states}")
    start = tuple(tuple(c) for c in start)
    if len(start) != len(members):
        raise OracleRefusal("Start locations do not match the group")

    tasks = [instance.tasks[a] for a in members]
    goals = tuple(t.goal for t in tasks)
    scale = w.numerator if w is not None else 1

    def h(locs) -> int:
        return instance.h_sum(members, locs)

    def terminal_value(g: int, locs) -> int:
        value = scale * (g + h(locs))
        if store is not None and w is not None:
            value += store.penalty_at(group, dict(zip(members, locs)))
        return value

    seq = count()
    if horizon is None:
        start_key: tuple = start
    else:
        start_key = (start, 0)
    best = {start_key: 0}
    parent: dict[tuple, tuple | None] = {start_key: None}
    frontier = [(scale * h(start), next(seq), 0, start_key, False)]
    while frontier:
        _, _, g, key, done = heapq.heappop(frontier)
        locs = key if horizon is None else key[0]
        if done:
            return OracleResult(value=terminal_value(g, locs), path=_unwind(parent, key, horizon))
        if g > best.get(key, g):
            continue
        if horizon is None and locs == goals:
            return OracleResult(value=g, path=_unwind(parent, key, horizon))
        if horizon is not None and key[1] == horizon:
            heapq.heappush(frontier, (terminal_value(g, locs), next(seq), g, key, True))
            continue
        for nxt in _joint_moves(instance.grid, locs):
            g1 = g + sum(transition_cost(t, a, b) for t, a, b in zip(tasks, locs, nxt))
            nkey = nxt if horizon is None else (nxt, key[1] + 1)
            if g1 >= best.get(nkey, g1 + 1):
                continue
            best[nkey] = g1
            parent[nkey] = key
            heapq.heappush(frontier, (scale * (g1 + h(nxt)), next(seq), g1, nkey, False))
    return OracleResult(value=None)


def _unwind(parent, key, horizon) -> tuple:
    path = []
    node = key
    while node is not None:
        path.append(node if horizon is None else node[0])
        node = parent[node]
    return tuple(reversed(path))


def verify_group_w_bound(
    instance: Instance,
    solution: GroupSolution,
    config: Sequence[Cell],
    store: PenaltyStore | None,
    window: int,
) -> VerificationRecord:
    """Fails iff the solution objective exceeds the best achievable w-scaled objective.

    The bound is min over collision-free windows of w·(c + h^BD) plus the terminal
    penalty packing. The penalty-free optimum is reported in ``detail``.
    """
    w = solution.w
    start = [config[a] for a in solution.group.members]
    bound = joint_astar(instance, solution.group, start, window, w=w, store=store).value
    physical = joint_astar(instance, solution.group, start, window).value
    passed = bound is not None and solution.objective <= bound
    return VerificationRecord(
        check="group-w-bound",
        instance=instance.name,
        group=list(solution.group.members),
        expected=bound if bound is not None else -1,
        actual=solution.objective,
        passed=passed,
        detail=f"w={w} physical optimum={physical} scaled={w.weigh(physical) if physical is not None else None}",
    )


def verify_penalty_admissibility(
    store: PenaltyStore, max_agents: int = DEFAULT_MAX_AGENTS
) -> list[VerificationRecord]:
    """One record per stored entry: h_value <= w·h*(entry locations), h* ignoring non-members."""
    records = []
    for entry in store.entries():
        optimum = joint_astar(store.instance, entry.group, entry.locations, max_agents=max_agents).value
        # an unreachable joint goal has infinite cost-to-go, so any finite value passes
        expected = store.w.weigh(optimum) if optimum is not None else entry.h_value
        records.append(
            VerificationRecord(
                check="penalty-admissibility",
                instance=store.instance.name,
                group=list(entry.group.members),
                expected=expected,
                actual=entry.h_value,
                passed=entry.h_value <= expected,
                detail=f"locations={list(entry.locations)}",
            )
        )
    failures = sum(not r.passed for r in records)
    if failures:
        logger.warning("%d of %d penalty entries exceed w·h*", failures, len(records))
    return records


def check_global_vs_group_gap(
    opt1: int = 10, opt2: int = 40, cost1: int = 30, cost2: int = 45, w: SuboptFactor | str | int = 2
) -> GapRecord:
    """Two groups can meet a global w-bound while one of them breaks its own bound."""
    w = SuboptFactor.parse(w)
    optima, costs = [opt1, opt2], [cost1, cost2]
    total = cost1 + cost2
    return GapRecord(
        optimal_costs=optima,
        plan_costs=costs,
        subopt=str(w),
        global_cost=total,
        global_bound=str(w.fraction * (opt1 + opt2)),
        global_pass=w.unit(total) <= w.weigh(opt1 + opt2),
        group_pass=[w.unit(c) <= w.weigh(o) for o, c in zip(optima, costs)],
    )


def write_report(records: Iterable[BaseModel], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for record in records:
            f.write(record.model_dump_json(by_alias=True) + "\n")
    return path
