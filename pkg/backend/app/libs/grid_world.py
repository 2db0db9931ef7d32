"""Grid maps, scenario files and single-agent distance fields.

Reads the community benchmark ``.map`` / ``.scen`` formats. Agents move in the
four cardinal directions or wait; map headers say ``type octile`` but diagonal
moves are never generated.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from app.libs.errors import MapParseError, ScenarioError

logger = logging.getLogger(__name__)

Cell = tuple[int, int]

PASSABLE = frozenset(".G")
BLOCKING = frozenset("@OTW")
UNREACHABLE = -1

# up, down, left, right
_MOVES: tuple[Cell, ...] = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Shortest move counts from every cell to ``goal``; UNREACHABLE for other components."""

    goal: Cell
    dist: np.ndarray
    _rows: list[list[int]] = field(init=False, repr=False)

    def __post_init__(self):
        self.dist.setflags(write=False)
        # plain lists are much faster than numpy scalar indexing in the search loops
        object.__setattr__(self, "_rows", self.dist.tolist())

    def __getitem__(self, cell: Cell) -> int:
        return self._rows[cell[0]][cell[1]]

    def reachable(self, cell: Cell) -> bool:
        return self._rows[cell[0]][cell[1]] != UNREACHABLE


@dataclass(frozen=True, eq=False)
class GridMap:
    """Immutable occupancy grid. ``blocked[r, c]`` is True for obstacles."""

    blocked: np.ndarray
    name: str = ""
    _fields: dict[Cell, DistanceField] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        blocked = np.array(self.blocked, dtype=bool)
        if blocked.ndim != 2 or blocked.shape[0] == 0 or blocked.shape[1] == 0:
            raise MapParseError(f"Grid must be a non-empty 2D array, got shape {blocked.shape}")
        blocked.setflags(write=False)
        object.__setattr__(self, "blocked", blocked)

    @property
    def height(self) -> int:
        return int(self.blocked.shape[0])

    @property
    def width(self) -> int:
        return int(self.blocked.shape[1])

    @property
    def blocked_count(self) -> int:
        return int(self.blocked.sum())

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.blocked[cell[0], cell[1]]

    def free_cells(self) -> list[Cell]:
        rows, cols = np.nonzero(~self.blocked)
        return [(int(r), int(c)) for r, c in zip(rows, cols)]

    def distance_field(self, goal: Cell) -> DistanceField:
        """Memoized backward search from ``goal``."""
        found = self._fields.get(goal)
        if found is None:
            found = backward_dijkstra(self, goal)
            self._fields[goal] = found
        return found


def neighbors(grid: GridMap, cell: Cell) -> list[Cell]:
    """Wait first, then up, down, left, right; only free in-bounds cells."""
    result = [cell]
    r, c = cell
    for dr, dc in _MOVES:
        nxt = (r + dr, c + dc)
        if grid.is_free(nxt):
            result.append(nxt)
    return result


def backward_dijkstra(grid: GridMap, goal: Cell) -> DistanceField:
    """Exact distances to ``goal``. Edges have unit cost, so the frontier is a FIFO queue."""
    if not grid.is_free(goal):
        raise ScenarioError(f"Goal {goal} is blocked or outside the map")
    dist = np.full(grid.blocked.shape, UNREACHABLE, dtype=np.int32)
    dist[goal] = 0
    frontier = deque([goal])
    while frontier:
        cell = frontier.popleft()
        d = dist[cell] + 1
        for nxt in neighbors(grid, cell)[1:]:
            if dist[nxt] == UNREACHABLE:
                dist[nxt] = d
                frontier.append(nxt)
    return DistanceField(goal=goal, dist=dist)


def parse_map(text: str, name: str = "") -> GridMap:
    lines = text.splitlines()

    def header(index: int, key: str) -> str:
        if index >= len(lines):
            raise MapParseError(f"Missing '{key}' header", line=index + 1)
        parts = lines[index].split()
        if not parts or parts[0] != key:
            raise MapParseError(f"Expected '{key}' header, got {lines[index]!r}", line=index + 1)
        if key == "map":
            return ""
        if len(parts) != 2:
            raise MapParseError(f"Malformed '{key}' header", line=index + 1)
        return parts[1]

    map_type = header(0, "type")
    if map_type != "octile":
        logger.debug("Map type %r treated as a 4-connected grid", map_type)
    try:
        height = int(header(1, "height"))
        width = int(header(2, "width"))
    except ValueError as e:
        raise MapParseError(f"Non-integer map dimension: {e}") from e
    if height <= 0 or width <= 0:
        raise MapParseError(f"Map dimensions must be positive, got {height}x{width}")
    header(3, "map")

    rows = lines[4 : 4 + height]
    if len(rows) != height:
        raise MapParseError(f"Expected {height} map rows, found {len(rows)}", line=len(lines))
    blocked = np.zeros((height, width), dtype=bool)
    for r, row in enumerate(rows):
        line_no = r + 5
        if len(row) != width:
            raise MapParseError(f"Row has {len(row)} characters, expected {width}", line=line_no)
        for c, ch in enumerate(row):
            if ch in BLOCKING:
                blocked[r, c] = True
            elif ch not in PASSABLE:
                raise MapParseError(f"Unknown map character {ch!r} at column {c}", line=line_no)
    for extra, row in enumerate(lines[4 + height :], start=5 + height):
        if row.strip():
            raise MapParseError("Unexpected content after the last map row", line=extra)
    return GridMap(blocked=blocked, name=name)


def serialize_map(grid: GridMap) -> str:
    rows = ["".join("@" if b else "." for b in row) for row in grid.blocked]
    return "\n".join(["type octile", f"height {grid.height}", f"width {grid.width}", "map", *rows]) + "\n"


def load_map(path: str | Path) -> GridMap:
    path = Path(path)
    return parse_map(path.read_text(), name=path.name)


@dataclass(frozen=True)
class AgentTask:
    agent_id: int
    start: Cell
    goal: Cell


def parse_scenario(text: str, grid: GridMap, num_agents: int | None = None) -> list[AgentTask]:
    """First ``num_agents`` tasks of a .scen file (all tasks when None)."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("version"):
        raise ScenarioError("Missing 'version' header", row=1)

    tasks: list[AgentTask] = []
    for row_no, line in enumerate(lines[1:], start=2):
        if num_agents is not None and len(tasks) == num_agents:
            break
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) < 9:
            fields = line.split()
        if len(fields) != 9:
            raise ScenarioError(f"Expected 9 fields, found {len(fields)}", row=row_no)
        try:
            map_w, map_h = int(fields[2]), int(fields[3])
            start = (int(fields[5]), int(fields[4]))
            goal = (int(fields[7]), int(fields[6]))
            optimal_length = float(fields[8])
        except ValueError as e:
            raise ScenarioError(f"Malformed numeric field: {e}", row=row_no) from e
        if (map_h, map_w) != (grid.height, grid.width):
            raise ScenarioError(
                f"Scenario targets a {map_w}x{map_h} map, map is {grid.width}x{grid.height}", row=row_no
            )
        for label, cell in (("start", start), ("goal", goal)):
            if not grid.is_free(cell):
                raise ScenarioError(f"Task {label} {cell} is blocked or outside the map", row=row_no)
        field_ = grid.distance_field(goal)
        if not field_.reachable(start):
            raise ScenarioError(f"Goal {goal} is unreachable from start {start}", row=row_no)
        if field_[start] != optimal_length:
            logger.debug(
                "Row %d optimal_length %s differs from 4-connected distance %d", row_no, optimal_length, field_[start]
            )
        tasks.append(AgentTask(agent_id=len(tasks), start=start, goal=goal))

    if num_agents is not None and len(tasks) < num_agents:
        raise ScenarioError(f"Scenario holds {len(tasks)} tasks, {num_agents} requested")
    return tasks


@dataclass(frozen=True, eq=False)
class Instance:
    """A map plus one task per agent; agent ids are 0..N-1 in task order."""

    grid: GridMap
    tasks: tuple[AgentTask, ...]
    name: str = ""
    _heuristics: tuple[DistanceField, ...] = field(init=False, repr=False)

    def __post_init__(self):
        tasks = tuple(self.tasks)
        object.__setattr__(self, "tasks", tasks)
        for i, task in enumerate(tasks):
            if task.agent_id != i:
                raise ScenarioError(f"Agent ids must be 0..N-1 in order, got {task.agent_id} at {i}")
            for label, cell in (("start", task.start), ("goal", task.goal)):
                if not self.grid.is_free(cell):
                    raise ScenarioError(f"Agent {i} {label} {cell} is blocked or outside the map")
        for label, cells in (("start", self.starts), ("goal", self.goals)):
            if len(set(cells)) != len(cells):
                raise ScenarioError(f"Two agents share a {label} cell")
        heuristics = tuple(self.grid.distance_field(task.goal) for task in tasks)
        for task, h in zip(tasks, heuristics):
            if not h.reachable(task.start):
                raise ScenarioError(f"Agent {task.agent_id} cannot reach its goal {task.goal}")
        object.__setattr__(self, "_heuristics", heuristics)

    @classmethod
    def from_cells(cls, grid: GridMap, starts: Sequence[Cell], goals: Sequence[Cell], name: str = "") -> "Instance":
        if len(starts) != len(goals):
            raise ScenarioError("starts and goals differ in length")
        tasks = tuple(AgentTask(i, tuple(s), tuple(g)) for i, (s, g) in enumerate(zip(starts, goals)))
        return cls(grid=grid, tasks=tasks, name=name)

    @property
    def num_agents(self) -> int:
        return len(self.tasks)

    @property
    def starts(self) -> tuple[Cell, ...]:
        return tuple(t.start for t in self.tasks)

    @property
    def goals(self) -> tuple[Cell, ...]:
        return tuple(t.goal for t in self.tasks)

    def heuristic(self, agent: int) -> DistanceField:
        return self._heuristics[agent]

    def h(self, agent: int, cell: Cell) -> int:
        return self._heuristics[agent][cell]

    def h_sum(self, agents: Iterable[int], cells: Iterable[Cell]) -> int:
        return sum(self._heuristics[a][c] for a, c in zip(agents, cells))


def load_instance(map_path: str | Path, scen_path: str | Path, num_agents: int | None = None) -> Instance:
    grid = load_map(map_path)
    tasks = parse_scenario(Path(scen_path).read_text(), grid, num_agents)
    name = f"{Path(scen_path).stem}-n{len(tasks)}"
    logger.info("Loaded %s: %dx%d map, %d agents", name, grid.height, grid.width, len(tasks))
    return Instance(grid=grid, tasks=tuple(tasks), name=name)
