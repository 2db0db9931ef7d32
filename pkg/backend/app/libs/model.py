"""Configurations, groups, move costs and collision detection."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from itertools import combinations
from math import gcd
from typing import Iterable, Mapping, Sequence

from app.libs.errors import ContractViolation
from app.libs.grid_world import AgentTask, Cell, GridMap

Configuration = tuple[Cell, ...]


@dataclass(frozen=True, order=True)
class AgentGroup:
    """Sorted, duplicate-free set of agent ids. Orders lexicographically by members."""

    members: tuple[int, ...]

    def __post_init__(self):
        members = tuple(self.members)
        if not members:
            raise ContractViolation("An agent group cannot be empty")
        if list(members) != sorted(set(members)):
            raise ContractViolation(f"Group members must be sorted and unique, got {members}")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, agents: Iterable[int]) -> "AgentGroup":
        return cls(tuple(sorted(set(agents))))

    def __iter__(self):
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, agent: object) -> bool:
        return agent in self.members

    def issubset(self, other: "AgentGroup | Iterable[int]") -> bool:
        return set(self.members) <= set(other)

    def isdisjoint(self, other: "AgentGroup | Iterable[int]") -> bool:
        return set(self.members).isdisjoint(other)

    def __str__(self) -> str:
        return "{" + ",".join(map(str, self.members)) + "}"


class ConflictKind(str, Enum):
    VERTEX = "vertex"
    EDGE = "edge"
    HEURISTIC = "heuristic"


_KIND_ORDER = {ConflictKind.VERTEX: 0, ConflictKind.EDGE: 1, ConflictKind.HEURISTIC: 2}


@dataclass(frozen=True)
class Conflict:
    """A collision between two agents, or a penalty entry that a CT node has not yet paid for.

    For edge conflicts ``cells`` is the move of ``agents[0]`` from timestep t to t+1.
    """

    kind: ConflictKind
    agents: tuple[int, ...]
    timestep: int
    cells: tuple[Cell, ...]
    entry: object | None = None

    def sort_key(self):
        return (self.timestep, _KIND_ORDER[self.kind], self.agents)

    def __str__(self) -> str:
        who = ",".join(map(str, self.agents))
        where = "->".join(f"({r},{c})" for r, c in self.cells)
        return f"{self.kind.value}[{who}]@{self.timestep}:{where}"


def transition_cost(task: AgentTask, from_cell: Cell, to_cell: Cell) -> int:
    """0 for resting on the goal, 1 for any other wait or move."""
    if from_cell != to_cell and abs(from_cell[0] - to_cell[0]) + abs(from_cell[1] - to_cell[1]) != 1:
        raise ContractViolation(f"Agent {task.agent_id}: {from_cell} -> {to_cell} is not a legal move")
    if from_cell == to_cell == task.goal:
        return 0
    return 1


def path_cost(task: AgentTask, path: Sequence[Cell], upto: int | None = None) -> int:
    """Cost of the first ``upto`` moves of ``path`` (all of them when None)."""
    steps = len(path) - 1 if upto is None else upto
    return sum(transition_cost(task, path[t], path[t + 1]) for t in range(steps))


def sum_of_cost(
    tasks: Sequence[AgentTask], steps: Sequence[Configuration], window: int | None = None
) -> int:
    """Summed transition cost of a configuration sequence over its first ``window`` moves."""
    moves = len(steps) - 1 if window is None else window
    if moves > len(steps) - 1:
        raise ContractViolation(f"Window {moves} exceeds the {len(steps) - 1} available moves")
    total = 0
    for t in range(moves):
        for task in tasks:
            a = task.agent_id
            total += transition_cost(task, steps[t][a], steps[t + 1][a])
    return total


def detect_collisions(
    path_a: Sequence[Cell], path_b: Sequence[Cell], window: int, agents: tuple[int, int] = (0, 1)
) -> list[Conflict]:
    """Vertex and edge (swap) collisions between two paths over timesteps 0..window."""
    if len(path_a) != window + 1 or len(path_b) != window + 1:
        raise ContractViolation(
            f"Paths of length {len(path_a)} and {len(path_b)} do not cover window {window}"
        )
    found = []
    for t in range(window + 1):
        if path_a[t] == path_b[t]:
            found.append(Conflict(ConflictKind.VERTEX, agents, t, (path_a[t],)))
        if t < window:
            a0, a1, b0, b1 = path_a[t], path_a[t + 1], path_b[t], path_b[t + 1]
            if a0 != a1 and a0 == b1 and a1 == b0:
                found.append(Conflict(ConflictKind.EDGE, agents, t, (a0, a1)))
    return found


def find_conflicts(paths: Mapping[int, Sequence[Cell]], window: int) -> list[Conflict]:
    """All pairwise collisions, earliest first, vertex before edge at equal timesteps."""
    found = []
    for a, b in combinations(sorted(paths), 2):
        found.extend(detect_collisions(paths[a], paths[b], window, (a, b)))
    found.sort(key=Conflict.sort_key)
    return found


def step_conflicts(before: Configuration, after: Configuration) -> list[Conflict]:
    """Collisions created by moving every agent from ``before`` to ``after`` in one timestep."""
    paths = {a: (before[a], after[a]) for a in range(len(before))}
    return [c for c in find_conflicts(paths, 1) if not (c.kind is ConflictKind.VERTEX and c.timestep == 0)]


def validate_plan(grid: GridMap, steps: Sequence[Configuration]) -> None:
    """Raise ContractViolation unless every move is legal and no two agents collide."""
    if not steps:
        raise ContractViolation("Empty plan")
    n = len(steps[0])
    for t, config in enumerate(steps):
        if len(config) != n:
            raise ContractViolation(f"Configuration {t} has {len(config)} agents, expected {n}")
        for a, cell in enumerate(config):
            if not grid.is_free(cell):
                raise ContractViolation(f"Agent {a} is on blocked cell {cell} at timestep {t}")
    for t in range(len(steps) - 1):
        for a in range(n):
            u, v = steps[t][a], steps[t + 1][a]
            if u != v and abs(u[0] - v[0]) + abs(u[1] - v[1]) != 1:
                raise ContractViolation(f"Agent {a}: {u} -> {v} at timestep {t} is not a legal move")
    paths = {a: [config[a] for config in steps] for a in range(n)}
    conflicts = find_conflicts(paths, len(steps) - 1)
    if conflicts:
        raise ContractViolation(f"Plan has {len(conflicts)} collisions, first {conflicts[0]}")


@dataclass(frozen=True)
class WindowedPlan:
    """Configurations C^0..C^W."""

    steps: tuple[Configuration, ...]

    def __post_init__(self):
        if len(self.steps) < 2:
            raise ContractViolation("A windowed plan needs at least one move")

    @property
    def window(self) -> int:
        return len(self.steps) - 1

    @property
    def start(self) -> Configuration:
        return self.steps[0]

    @property
    def terminal(self) -> Configuration:
        return self.steps[-1]

    def agent_path(self, agent: int) -> tuple[Cell, ...]:
        return tuple(config[agent] for config in self.steps)


@dataclass(frozen=True)
class SuboptFactor:
    """Exact suboptimality w = numerator / denominator >= 1.

    Solver quantities are integers in units of 1/denominator: ``unit(x)`` scales a
    cost, ``weigh(x)`` scales and multiplies by w.
    """

    numerator: int
    denominator: int = 1

    def __post_init__(self):
        if self.denominator <= 0 or self.numerator < self.denominator:
            raise ValueError(f"Suboptimality must be a rational >= 1, got {self.numerator}/{self.denominator}")
        g = gcd(self.numerator, self.denominator)
        object.__setattr__(self, "numerator", self.numerator // g)
        object.__setattr__(self, "denominator", self.denominator // g)

    @classmethod
    def parse(cls, value: "str | int | Fraction | SuboptFactor") -> "SuboptFactor":
        """Accepts "3/2", "1.5", 2 or a Fraction. Decimals need a denominator of at most 1000."""
        if isinstance(value, SuboptFactor):
            return value
        try:
            frac = Fraction(str(value).strip()) if not isinstance(value, Fraction) else value
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"Cannot parse suboptimality {value!r}") from e
        if frac.denominator > 1000:
            raise ValueError(f"Suboptimality {value!r} needs a denominator above 1000")
        return cls(frac.numerator, frac.denominator)

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def unit(self, raw: int) -> int:
        return raw * self.denominator

    def weigh(self, raw: int) -> int:
        return raw * self.numerator

    def __str__(self) -> str:
        return str(self.numerator) if self.denominator == 1 else f"{self.numerator}/{self.denominator}"
