"""Single-agent bounded-suboptimal search over (cell, timestep) for one window."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Mapping, Sequence

from app.libs.focal import FocalQueue
from app.libs.grid_world import Cell, Instance, neighbors
from app.libs.model import SuboptFactor, transition_cost

logger = logging.getLogger(__name__)


class FocalRule(str, Enum):
    """Which focal admission test a search uses.

    DAG admits c + w·h <= w·min(c + h); ECBS admits c + h <= w·min(c + h).
    """

    DAG = "dag"
    ECBS = "ecbs"


class ConstraintKind(str, Enum):
    FORBID_VERTEX = "forbid-vertex"
    FORBID_EDGE = "forbid-edge"
    REQUIRE_VERTEX = "require-vertex"


@dataclass(frozen=True, order=True)
class AgentConstraint:
    agent: int
    kind: ConstraintKind
    timestep: int
    cell: Cell
    to_cell: Cell | None = None

    @classmethod
    def forbid_vertex(cls, agent: int, cell: Cell, timestep: int) -> "AgentConstraint":
        return cls(agent, ConstraintKind.FORBID_VERTEX, timestep, cell)

    @classmethod
    def forbid_edge(cls, agent: int, from_cell: Cell, to_cell: Cell, timestep: int) -> "AgentConstraint":
        return cls(agent, ConstraintKind.FORBID_EDGE, timestep, from_cell, to_cell)

    @classmethod
    def require_vertex(cls, agent: int, cell: Cell, timestep: int) -> "AgentConstraint":
        return cls(agent, ConstraintKind.REQUIRE_VERTEX, timestep, cell)

    def violated_by(self, path: Sequence[Cell]) -> bool:
        t = self.timestep
        if self.kind is ConstraintKind.FORBID_VERTEX:
            return t < len(path) and path[t] == self.cell
        if self.kind is ConstraintKind.REQUIRE_VERTEX:
            return t >= len(path) or path[t] != self.cell
        return t + 1 < len(path) and path[t] == self.cell and path[t + 1] == self.to_cell

    def __str__(self) -> str:
        where = f"{self.cell}->{self.to_cell}" if self.to_cell is not None else f"{self.cell}"
        return f"{self.kind.value}(a{self.agent}, {where}, t={self.timestep})"


@dataclass(frozen=True)
class SpaceTimeState:
    cell: Cell
    timestep: int


@dataclass(frozen=True)
class AgentPlan:
    """Result of one low-level search. ``min_f`` is the anchor minimum at termination."""

    agent: int
    path: tuple[Cell, ...]
    cost: int
    h_terminal: int
    min_f: int
    expanded: int

    @property
    def terminal(self) -> Cell:
        return self.path[-1]


ConflictCounter = Callable[[Cell, Cell, int], int]


class SiblingPaths:
    """Counts collisions of a move against the fixed paths of other agents."""

    def __init__(self, paths: Iterable[Sequence[Cell]]):
        self._vertex: dict[tuple[Cell, int], int] = {}
        self._edge: dict[tuple[Cell, Cell, int], int] = {}
        for path in paths:
            for t, cell in enumerate(path):
                self._vertex[(cell, t)] = self._vertex.get((cell, t), 0) + 1
                if t + 1 < len(path) and path[t + 1] != cell:
                    key = (cell, path[t + 1], t)
                    self._edge[key] = self._edge.get(key, 0) + 1

    def __call__(self, from_cell: Cell, to_cell: Cell, t: int) -> int:
        hits = self._vertex.get((to_cell, t + 1), 0)
        if from_cell != to_cell:
            hits += self._edge.get((to_cell, from_cell, t), 0)
        return hits


def dag_focal_admissible(g: int, h: int, w: SuboptFactor, min_anchor: int) -> bool:
    return w.unit(g) + w.weigh(h) <= w.weigh(min_anchor)


def baseline_focal_admissible(g: int, h: int, w: SuboptFactor, min_anchor: int) -> bool:
    return w.unit(g + h) <= w.weigh(min_anchor)


class _Node:
    __slots__ = ("cell", "t", "g", "h", "conflicts", "parent", "entry")

    def __init__(self, cell: Cell, t: int, g: int, h: int, conflicts: int, parent: "_Node | None"):
        self.cell = cell
        self.t = t
        self.g = g
        self.h = h
        self.conflicts = conflicts
        self.parent = parent
        self.entry = None

    def path(self) -> tuple[Cell, ...]:
        cells = []
        node = self
        while node is not None:
            cells.append(node.cell)
            node = node.parent
        return tuple(reversed(cells))


def plan_agent_path(
    instance: Instance,
    agent: int,
    start: Cell,
    constraints: Iterable[AgentConstraint],
    window: int,
    w: SuboptFactor,
    conflict_counter: ConflictCounter | None = None,
    rule: FocalRule = FocalRule.DAG,
) -> AgentPlan | None:
    """Focal search for a path of exactly ``window`` moves; None when constraints are unsatisfiable.

    The anchor orders states by g + h^BD. Focal prefers fewer sibling conflicts,
    then later timesteps, then smaller h^BD, then smaller g, then generation order.
    """
    task = instance.tasks[agent]
    h = instance.heuristic(agent)
    grid = instance.grid

    forbidden_vertex: set[tuple[Cell, int]] = set()
    forbidden_edge: set[tuple[Cell, Cell, int]] = set()
    required: dict[int, Cell] = {}
    for con in constraints:
        if con.agent != agent:
            continue
        if con.kind is ConstraintKind.FORBID_VERTEX:
            forbidden_vertex.add((con.cell, con.timestep))
        elif con.kind is ConstraintKind.FORBID_EDGE:
            forbidden_edge.add((con.cell, con.to_cell, con.timestep))
        else:
            if required.get(con.timestep, con.cell) != con.cell:
                return None
            required[con.timestep] = con.cell
    if any((cell, t) in forbidden_vertex for t, cell in required.items()):
        return None
    if any(t > window for t in required):
        return None
    targets = [(t, cell, grid.distance_field(cell)) for t, cell in sorted(required.items())]

    def allowed(cell: Cell, t: int) -> bool:
        if (cell, t) in forbidden_vertex:
            return False
        for rt, rcell, dist in targets:
            if rt >= t and not (dist.reachable(cell) and dist[cell] <= rt - t):
                return False
        return True

    if not allowed(start, 0):
        return None

    if rule is FocalRule.DAG:
        admission = lambda node: w.unit(node.g) + w.weigh(node.h)
    else:
        admission = lambda node: w.unit(node.g + node.h)
    counter = conflict_counter or (lambda a, b, t: 0)

    # both rules compare against w·min(g + h)
    open_list: FocalQueue[_Node] = FocalQueue(w.weigh)
    best: dict[tuple[Cell, int], _Node] = {}

    def push(node: _Node) -> None:
        node.entry = open_list.push(node, node.g + node.h, admission(node), (node.conflicts, -node.t, node.h, node.g))
        best[(node.cell, node.t)] = node

    push(_Node(start, 0, 0, h[start], 0, None))
    expanded = 0
    while open_list:
        node = open_list.pop()
        if node.t == window:
            plan = AgentPlan(
                agent=agent,
                path=node.path(),
                cost=node.g,
                h_terminal=node.h,
                min_f=open_list.last_min_anchor,
                expanded=expanded,
            )
            if open_list.last_from_anchor:
                logger.debug("Agent %d: focal list empty, took the anchor minimum", agent)
            return plan
        expanded += 1
        t1 = node.t + 1
        for nxt in neighbors(grid, node.cell):
            if (node.cell, nxt, node.t) in forbidden_edge or not allowed(nxt, t1):
                continue
            g1 = node.g + transition_cost(task, node.cell, nxt)
            old = best.get((nxt, t1))
            if old is not None and old.g <= g1:
                continue
            if old is not None:
                open_list.discard(old.entry)
            push(_Node(nxt, t1, g1, h[nxt], node.conflicts + counter(node.cell, nxt, node.t), node))
    return None
