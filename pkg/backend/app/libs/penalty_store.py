"""Learned penalty heuristics for agent groups.

The store holds raised estimates h(C) for exact (group, locations) keys. A lookup
for a planning group at a terminal configuration returns the entries whose group is
a subset of the planning group and whose locations all match. Entries that share
agents are never summed together; the lookup picks the disjoint subset with the
largest total residual, so the result stays a lower bound on w times the true
cost-to-go.

All values are integers in units of 1/q for w = p/q (see SuboptFactor).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from pydantic import BaseModel, Field

from app.libs.errors import ContractViolation
from app.libs.grid_world import Cell, Instance
from app.libs.model import AgentGroup, SuboptFactor, path_cost

logger = logging.getLogger(__name__)

Key = tuple[AgentGroup, tuple[Cell, ...]]


@dataclass(frozen=True)
class PenaltyEntry:
    group: AgentGroup
    locations: tuple[Cell, ...]
    h_value: int
    base: int

    @property
    def residual(self) -> int:
        """Amount by which the entry exceeds w times the summed backward distances."""
        return self.h_value - self.base

    @property
    def key(self) -> Key:
        return (self.group, self.locations)

    def matches(self, terminal: Mapping[int, Cell]) -> bool:
        return all(terminal.get(a) == cell for a, cell in zip(self.group.members, self.locations))

    def sort_key(self):
        return (-self.residual, self.group.members, self.locations)


class PenaltyRecord(BaseModel):
    agents: list[int] = Field(..., description="Sorted agent ids of the group")
    locations: list[tuple[int, int]] = Field(..., description="(row, col) per agent, aligned with agents")
    h_value: int = Field(..., description="Raised estimate in units of 1/denominator")
    subopt: str = Field(..., description="Suboptimality the value was learned under, e.g. 3/2")


def best_packing(candidates: Iterable[PenaltyEntry]) -> tuple[int, tuple[PenaltyEntry, ...]]:
    """Agent-disjoint subset of ``candidates`` with the largest summed residual.

    Search runs largest-residual first; ties keep the first packing found, which
    makes the choice deterministic.
    """
    ordered = sorted((e for e in candidates if e.residual > 0), key=PenaltyEntry.sort_key)
    if not ordered:
        return 0, ()
    suffix = [0] * (len(ordered) + 1)
    for i in range(len(ordered) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + ordered[i].residual

    best_value = -1
    best_choice: tuple[PenaltyEntry, ...] = ()
    chosen: list[PenaltyEntry] = []

    def visit(i: int, used: frozenset[int], value: int) -> None:
        nonlocal best_value, best_choice
        if value + suffix[i] <= best_value:
            return
        if i == len(ordered):
            best_value, best_choice = value, tuple(chosen)
            return
        entry = ordered[i]
        if used.isdisjoint(entry.group.members):
            chosen.append(entry)
            visit(i + 1, used | set(entry.group.members), value + entry.residual)
            chosen.pop()
        visit(i + 1, used, value)

    visit(0, frozenset(), 0)
    return best_value, best_choice


class PenaltyStore:
    """Mutable map from (group, locations) to raised heuristic values.

    ``version`` counts successful raises.
    """

    def __init__(self, instance: Instance, w: SuboptFactor):
        self.instance = instance
        self.w = w
        self.version = 0
        self._entries: dict[Key, PenaltyEntry] = {}
        self._index: dict[tuple[int, Cell], set[Key]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def base_value(self, group: AgentGroup, locations: Sequence[Cell]) -> int:
        return self.w.weigh(self.instance.h_sum(group.members, locations))

    def get(self, group: AgentGroup, locations: Sequence[Cell]) -> PenaltyEntry | None:
        return self._entries.get((group, tuple(locations)))

    def entries(self) -> list[PenaltyEntry]:
        return sorted(self._entries.values(), key=lambda e: (e.group.members, e.locations))

    def group_heuristic(self, group: AgentGroup, locations: Sequence[Cell]) -> int:
        """Exact-key value, or w times the summed backward distances when nothing was learned."""
        entry = self.get(group, locations)
        return entry.h_value if entry is not None else self.base_value(group, locations)

    def matches(self, terminal: Mapping[int, Cell], within: Iterable[int] | None = None) -> list[PenaltyEntry]:
        """Positive-residual entries fully inside ``within`` whose locations match ``terminal``."""
        allowed = set(terminal) if within is None else set(within) & set(terminal)
        keys: set[Key] = set()
        for agent in allowed:
            keys |= self._index.get((agent, terminal[agent]), set())
        found = []
        for key in keys:
            entry = self._entries[key]
            if entry.residual > 0 and entry.group.issubset(allowed) and entry.matches(terminal):
                found.append(entry)
        found.sort(key=PenaltyEntry.sort_key)
        return found

    def matched_penalties(
        self, group: AgentGroup, terminal: Mapping[int, Cell]
    ) -> tuple[int, tuple[PenaltyEntry, ...]]:
        """Best disjoint packing of the entries a planning group incurs at ``terminal``."""
        return best_packing(self.matches(terminal, group.members))

    def penalty_at(self, group: AgentGroup, terminal: Mapping[int, Cell]) -> int:
        return self.matched_penalties(group, terminal)[0]

    def terminal_heuristic(self, group: AgentGroup, locations: Sequence[Cell]) -> int:
        """w·h^BD plus the packed residuals of every entry inside ``group`` at ``locations``."""
        terminal = dict(zip(group.members, locations))
        return self.base_value(group, locations) + self.penalty_at(group, terminal)

    def raise_to(self, group: AgentGroup, locations: Sequence[Cell], value: int) -> PenaltyEntry | None:
        """Store ``value`` if it beats the current estimate; returns the new entry or None."""
        locations = tuple(locations)
        if len(locations) != len(group):
            raise ContractViolation(f"Group {group} has {len(group)} agents but {len(locations)} locations")
        if value <= self.group_heuristic(group, locations):
            return None
        entry = PenaltyEntry(group, locations, value, self.base_value(group, locations))
        if entry.key not in self._entries:
            for agent, cell in zip(group.members, locations):
                self._index.setdefault((agent, cell), set()).add(entry.key)
        self._entries[entry.key] = entry
        self.version += 1
        return entry

    def apply_terminal_update(
        self,
        group: AgentGroup,
        start: Sequence[Cell],
        terminal: Sequence[Cell],
        cost: int,
        terminal_value: int,
    ) -> int:
        """Raise h(start) to cost + terminal_value and return the updated value U.

        ``cost`` and ``terminal_value`` are already scaled. The stored value never decreases.
        """
        update = max(self.group_heuristic(group, start), cost + terminal_value)
        if self.raise_to(group, start, update) is not None:
            logger.debug("Raised %s at %s to %d", group, tuple(start), update)
        return update

    def apply_intermediate_updates(
        self, group: AgentGroup, steps: Sequence[Sequence[Cell]], update: int
    ) -> list[PenaltyEntry]:
        """Raise h(C^t) to U - w·c(C^0, C^t) for every intermediate configuration of a window.

        ``steps[t]`` holds the group's locations at timestep t, aligned with ``group.members``.
        """
        tasks = [self.instance.tasks[a] for a in group.members]
        raised = []
        for t in range(1, len(steps) - 1):
            cost = sum(
                path_cost(task, [steps[s][k] for s in range(t + 1)]) for k, task in enumerate(tasks)
            )
            entry = self.raise_to(group, steps[t], update - self.w.weigh(cost))
            if entry is not None:
                raised.append(entry)
        return raised

    def records(self) -> list[PenaltyRecord]:
        return [
            PenaltyRecord(
                agents=list(e.group.members),
                locations=[tuple(c) for c in e.locations],
                h_value=e.h_value,
                subopt=str(self.w),
            )
            for e in self.entries()
        ]

    def dump_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            for record in self.records():
                f.write(record.model_dump_json() + "\n")
        return path

    @classmethod
    def load_jsonl(cls, path: str | Path, instance: Instance, w: SuboptFactor) -> "PenaltyStore":
        store = cls(instance, w)
        for line in Path(path).read_text().splitlines():
            if not line.strip():
                continue
            record = PenaltyRecord.model_validate_json(line)
            if SuboptFactor.parse(record.subopt) != w:
                raise ContractViolation(f"Penalty file was learned under w={record.subopt}, not {w}")
            store.raise_to(AgentGroup(tuple(record.agents)), [tuple(c) for c in record.locations], record.h_value)
        return store
