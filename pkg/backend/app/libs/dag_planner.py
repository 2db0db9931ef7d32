"""Per-window planning with dynamic agent grouping.

Every agent starts in its own group. Groups are planned one at a time from a
FIFO queue, each ignoring all other agents. A fresh plan that collides with an
already committed group, or that completes a penalty entry spanning a
committed group, is merged with those groups and requeued. The loop ends when
every committed group is independent of the others.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from app.libs.errors import ContractViolation, PlannerFailure, PlannerTimeout
from app.libs.grid_world import Cell, Instance
from app.libs.group_ecbs import CTTrace, GroupSolution, solve_group
from app.libs.low_level_search import FocalRule
from app.libs.model import AgentGroup, Configuration, SuboptFactor, WindowedPlan, detect_collisions
from app.libs.penalty_store import PenaltyStore

logger = logging.getLogger(__name__)


@dataclass
class PlannerResult:
    plan: WindowedPlan
    groups: list[GroupSolution]
    merges: int = 0
    solve_calls: int = 0
    elapsed_s: float = 0.0
    group_times_s: list[float] = field(default_factory=list)

    @property
    def steps(self) -> tuple[Configuration, ...]:
        return self.plan.steps

    @property
    def disjoint_groups(self) -> list[AgentGroup]:
        return [g.group for g in self.groups]


def merge_groups(a: AgentGroup, bs: Iterable[AgentGroup]) -> AgentGroup:
    merged = set(a.members)
    for b in bs:
        if not merged.isdisjoint(b.members):
            raise ContractViolation(f"Cannot merge overlapping groups {a} and {b}")
        merged |= set(b.members)
    return AgentGroup.of(merged)


def cross_group_conflicts(
    candidate: GroupSolution, committed: Sequence[GroupSolution], store: PenaltyStore | None
) -> list[AgentGroup]:
    """Committed groups the candidate collides with or shares a matched penalty entry with."""
    hits: list[AgentGroup] = []
    for other in committed:
        if any(
            detect_collisions(candidate.paths[a], other.paths[b], len(candidate.paths[a]) - 1, (a, b))
            for a in candidate.group
            for b in other.group
        ):
            hits.append(other.group)

    if store is not None and len(store):
        owner = {a: sol.group for sol in committed for a in sol.group}
        terminal = {a: path[-1] for sol in [candidate, *committed] for a, path in sol.paths.items()}
        spanned = set()
        for entry in store.matches(terminal):
            if entry.group.isdisjoint(candidate.group) or entry.group.issubset(candidate.group):
                continue
            spanned |= {owner[a] for a in entry.group if a in owner}
        hits.extend(sol.group for sol in committed if sol.group in spanned and sol.group not in hits)
    return hits


def _assemble(instance: Instance, config: Configuration, solutions: Iterable[GroupSolution], window: int):
    paths: dict[int, Sequence[Cell]] = {}
    for sol in solutions:
        paths.update(sol.paths)
    if sorted(paths) != list(range(instance.num_agents)):
        raise ContractViolation("Committed groups do not cover every agent exactly once")
    steps = tuple(tuple(paths[a][t] for a in range(instance.num_agents)) for t in range(window + 1))
    if steps[0] != tuple(config):
        raise ContractViolation("Plan does not start at the current configuration")
    return WindowedPlan(steps)


def plan_step(
    instance: Instance,
    config: Configuration,
    store: PenaltyStore | None,
    window: int,
    w: SuboptFactor,
    deadline: float | None = None,
    *,
    low_level_rule: FocalRule = FocalRule.DAG,
    trace: CTTrace | None = None,
) -> PlannerResult:
    """One call of the grouping loop; raises PlannerFailure or PlannerTimeout."""
    started = time.monotonic()
    active: deque[AgentGroup] = deque(AgentGroup((a,)) for a in range(instance.num_agents))
    committed: dict[AgentGroup, GroupSolution] = {}
    merges = solve_calls = 0
    group_times = []

    while active:
        if deadline is not None and time.monotonic() > deadline:
            raise PlannerTimeout(f"Window planning timed out with {len(active)} groups pending")
        group = active.popleft()
        t0 = time.monotonic()
        solution = solve_group(
            instance,
            group,
            config,
            store,
            window,
            w,
            rule=FocalRule.DAG,
            low_level_rule=low_level_rule,
            deadline=deadline,
            trace=trace,
        )
        group_times.append(time.monotonic() - t0)
        solve_calls += 1
        if solution is None:
            raise PlannerFailure(f"Group {group} has no windowed solution")

        hits = cross_group_conflicts(solution, list(committed.values()), store)
        if not hits:
            committed[group] = solution
            continue
        for hit in hits:
            del committed[hit]
        merged = merge_groups(group, hits)
        merges += 1
        logger.debug("Merged groups %s and %s into %s", group, ", ".join(map(str, hits)), merged)
        active.append(merged)

    solutions = sorted(committed.values(), key=lambda s: s.group)
    return PlannerResult(
        plan=_assemble(instance, config, solutions, window),
        groups=solutions,
        merges=merges,
        solve_calls=solve_calls,
        elapsed_s=time.monotonic() - started,
        group_times_s=group_times,
    )


def solve_windowed_ecbs_baseline(
    instance: Instance,
    config: Configuration,
    window: int,
    w: SuboptFactor,
    deadline: float | None = None,
    *,
    trace: CTTrace | None = None,
) -> PlannerResult:
    """Plain windowed ECBS over all agents: no penalties, no grouping."""
    started = time.monotonic()
    everyone = AgentGroup(tuple(range(instance.num_agents)))
    solution = solve_group(
        instance, everyone, config, None, window, w, rule=FocalRule.ECBS, deadline=deadline, trace=trace
    )
    if solution is None:
        raise PlannerFailure("Windowed ECBS found no joint plan")
    elapsed = time.monotonic() - started
    return PlannerResult(
        plan=_assemble(instance, config, [solution], window),
        groups=[solution],
        solve_calls=1,
        elapsed_s=elapsed,
        group_times_s=[elapsed],
    )
