"""Constraint-tree focal search for one agent group over a single window.

The high level branches on vertex and edge collisions between group members
and on penalty entries the group's terminal configuration incurs without paying
for them. With ``FocalRule.DAG`` the anchor is h_p + w·Σ lower bounds and a node
enters focal when q·c + p·h^BD + h_p fits under the anchor minimum. With
``FocalRule.ECBS`` penalties are ignored and the unmodified ECBS rules apply.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from itertools import count
from pathlib import Path
from typing import Mapping, Sequence

from pydantic import BaseModel

from app.libs.errors import PlannerTimeout
from app.libs.focal import FocalQueue
from app.libs.grid_world import Cell, Instance
from app.libs.low_level_search import (
    AgentConstraint,
    AgentPlan,
    FocalRule,
    SiblingPaths,
    plan_agent_path,
)
from app.libs.model import AgentGroup, Conflict, ConflictKind, SuboptFactor, find_conflicts
from app.libs.penalty_store import PenaltyEntry, PenaltyStore, best_packing

logger = logging.getLogger(__name__)


@dataclass
class ConstraintTreeNode:
    node_id: int
    parent_id: int | None
    constraints: dict[int, tuple[AgentConstraint, ...]]
    plans: dict[int, AgentPlan]
    lower_bounds: dict[int, int]
    forced: tuple[PenaltyEntry, ...] = ()
    incurred_penalty: int = 0
    conflicts: list[Conflict] = field(default_factory=list)
    added: tuple[AgentConstraint, ...] = ()

    @property
    def paths(self) -> dict[int, tuple[Cell, ...]]:
        return {a: p.path for a, p in self.plans.items()}

    @property
    def terminal(self) -> dict[int, Cell]:
        return {a: p.terminal for a, p in self.plans.items()}

    @property
    def cost(self) -> int:
        return sum(p.cost for p in self.plans.values())

    @property
    def h_bd(self) -> int:
        return sum(p.h_terminal for p in self.plans.values())


@dataclass(frozen=True)
class Branch:
    """Constraints one child adds, and the entry it agrees to pay for (incur branches only)."""

    constraints: tuple[AgentConstraint, ...]
    incur: PenaltyEntry | None = None


@dataclass(frozen=True)
class GroupSolution:
    group: AgentGroup
    paths: dict[int, tuple[Cell, ...]]
    objective: int
    lower_bound: int
    cost: int
    h_bd: int
    incurred_penalty: int
    incurred: tuple[PenaltyEntry, ...]
    w: SuboptFactor
    expanded_nodes: int = 0

    @property
    def terminal(self) -> tuple[Cell, ...]:
        return tuple(self.paths[a][-1] for a in self.group.members)

    @property
    def h_terminal(self) -> int:
        """Scaled group heuristic at the terminal configuration, penalties included."""
        return self.w.weigh(self.h_bd) + self.incurred_penalty

    def group_steps(self) -> list[tuple[Cell, ...]]:
        """Group locations per timestep, aligned with ``group.members``."""
        length = len(next(iter(self.paths.values())))
        return [tuple(self.paths[a][t] for a in self.group.members) for t in range(length)]


class CTTraceRecord(BaseModel):
    group: list[int]
    node_id: int
    parent_id: int | None
    added: list[str]
    f3: int
    min_anchor: int
    objective: int
    conflict: str | None


class CTTrace:
    """Collects one record per expanded constraint-tree node."""

    def __init__(self):
        self.records: list[CTTraceRecord] = []

    def add(
        self,
        group: AgentGroup,
        node: ConstraintTreeNode,
        f3: int,
        objective: int,
        conflict: Conflict | None,
        min_anchor: int | None = None,
    ):
        self.records.append(
            CTTraceRecord(
                group=list(group.members),
                node_id=node.node_id,
                parent_id=node.parent_id,
                added=[str(c) for c in node.added],
                f3=f3,
                min_anchor=f3 if min_anchor is None else min_anchor,
                objective=objective,
                conflict=str(conflict) if conflict is not None else None,
            )
        )

    def write_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a") as f:
            for record in self.records:
                f.write(record.model_dump_json() + "\n")
        return path


def node_priorities(node: ConstraintTreeNode, w: SuboptFactor, rule: FocalRule = FocalRule.DAG):
    """(anchor value, focal key). DAG anchor is h_p + w·Σ lower bounds; ECBS drops h_p."""
    anchor = w.weigh(sum(node.lower_bounds.values()))
    if rule is FocalRule.DAG:
        anchor += node.incurred_penalty
    return anchor, (len(node.conflicts), anchor)


def node_objective(node: ConstraintTreeNode, w: SuboptFactor, rule: FocalRule = FocalRule.DAG) -> int:
    if rule is FocalRule.DAG:
        return w.unit(node.cost) + w.weigh(node.h_bd) + node.incurred_penalty
    return w.unit(node.cost + node.h_bd)


def branch_on_conflict(node: ConstraintTreeNode, conflict: Conflict, window: int) -> list[Branch]:
    i = conflict.agents[0]
    t = conflict.timestep
    if conflict.kind is ConflictKind.VERTEX:
        cell = conflict.cells[0]
        return [
            Branch((AgentConstraint.forbid_vertex(agent, cell, t),)) for agent in conflict.agents
        ]
    if conflict.kind is ConflictKind.EDGE:
        j = conflict.agents[1]
        a, b = conflict.cells
        return [
            Branch((AgentConstraint.forbid_edge(i, a, b, t),)),
            Branch((AgentConstraint.forbid_edge(j, b, a, t),)),
        ]
    entry: PenaltyEntry = conflict.entry
    members = list(zip(entry.group.members, entry.locations))
    avoid = [
        Branch((AgentConstraint.forbid_vertex(agent, cell, window),)) for agent, cell in members
    ]
    incur = Branch(tuple(AgentConstraint.require_vertex(agent, cell, window) for agent, cell in members), incur=entry)
    return avoid + [incur]


def solve_group(
    instance: Instance,
    group: AgentGroup,
    config: Sequence[Cell],
    store: PenaltyStore | None,
    window: int,
    w: SuboptFactor,
    *,
    rule: FocalRule = FocalRule.DAG,
    low_level_rule: FocalRule | None = None,
    deadline: float | None = None,
    trace: CTTrace | None = None,
) -> GroupSolution | None:
    """Bounded-suboptimal windowed plan for ``group``, ignoring every other agent.

    ``config`` is the full joint configuration; only members' cells are read.
    Returns None when the anchor list runs dry.
    """
    low_rule = low_level_rule or rule
    use_penalties = store is not None and rule is FocalRule.DAG
    node_ids = count()

    def replan(agent: int, constraints, plans: Mapping[int, AgentPlan]) -> AgentPlan | None:
        siblings = SiblingPaths(p.path for a, p in plans.items() if a != agent)
        return plan_agent_path(instance, agent, config[agent], constraints, window, w, siblings, low_rule)

    def finish(node: ConstraintTreeNode) -> ConstraintTreeNode:
        node.conflicts = find_conflicts(node.paths, window)
        if use_penalties:
            node.incurred_penalty = best_packing(node.forced)[0]
        return node

    root_plans: dict[int, AgentPlan] = {}
    for agent in group.members:
        plan = replan(agent, (), root_plans)
        if plan is None:
            return None
        root_plans[agent] = plan
    root = finish(
        ConstraintTreeNode(
            node_id=next(node_ids),
            parent_id=None,
            constraints={a: () for a in group.members},
            plans=root_plans,
            lower_bounds={a: p.min_f for a, p in root_plans.items()},
        )
    )

    def make_child(parent: ConstraintTreeNode, branch: Branch) -> ConstraintTreeNode | None:
        constraints = dict(parent.constraints)
        plans = dict(parent.plans)
        lower_bounds = dict(parent.lower_bounds)
        for con in branch.constraints:
            constraints[con.agent] = constraints[con.agent] + (con,)
        for agent in sorted({c.agent for c in branch.constraints}):
            if not any(c.violated_by(plans[agent].path) for c in branch.constraints if c.agent == agent):
                continue
            plan = replan(agent, constraints[agent], plans)
            if plan is None:
                return None
            plans[agent] = plan
            lower_bounds[agent] = max(lower_bounds[agent], plan.min_f)
        return finish(
            ConstraintTreeNode(
                node_id=next(node_ids),
                parent_id=parent.node_id,
                constraints=constraints,
                plans=plans,
                lower_bounds=lower_bounds,
                forced=parent.forced + ((branch.incur,) if branch.incur else ()),
                added=branch.constraints,
            )
        )

    def penalty_conflict(node: ConstraintTreeNode) -> Conflict | None:
        if not use_penalties:
            return None
        value, packing = store.matched_penalties(group, node.terminal)
        if value <= node.incurred_penalty:
            return None
        entry = next(e for e in packing if e not in node.forced)
        return Conflict(ConflictKind.HEURISTIC, entry.group.members, window, entry.locations, entry)

    open_list: FocalQueue[ConstraintTreeNode] = FocalQueue(lambda lowest: lowest)

    def push(node: ConstraintTreeNode) -> None:
        anchor, focal_key = node_priorities(node, w, rule)
        open_list.push(node, anchor, node_objective(node, w, rule), focal_key)

    push(root)
    expanded = 0
    while open_list:
        if deadline is not None and time.monotonic() > deadline:
            raise PlannerTimeout(f"Group {group} ran out of time after {expanded} CT expansions")
        node = open_list.pop()
        conflict = node.conflicts[0] if node.conflicts else penalty_conflict(node)
        if trace is not None:
            trace.add(
                group,
                node,
                node_priorities(node, w, rule)[0],
                node_objective(node, w, rule),
                conflict,
                open_list.last_min_anchor,
            )
        if conflict is None:
            logger.debug("Group %s solved after %d CT expansions", group, expanded)
            return GroupSolution(
                group=group,
                paths=node.paths,
                objective=node_objective(node, w, rule),
                lower_bound=open_list.last_min_anchor,
                cost=node.cost,
                h_bd=node.h_bd,
                incurred_penalty=node.incurred_penalty,
                incurred=node.forced,
                w=w,
                expanded_nodes=expanded,
            )
        expanded += 1
        for branch in branch_on_conflict(node, conflict, window):
            child = make_child(node, branch)
            if child is not None:
                push(child)
    logger.debug("Group %s has no windowed solution", group)
    return None
