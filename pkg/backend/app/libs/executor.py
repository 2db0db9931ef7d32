"""Plan a window, execute one step, learn from the plan, repeat."""

from __future__ import annotations

import hashlib
import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, Field

from app.libs.dag_planner import PlannerResult, plan_step, solve_windowed_ecbs_baseline
from app.libs.errors import ContractViolation, PlannerFailure, PlannerTimeout
from app.libs.grid_world import Instance
from app.libs.group_ecbs import CTTrace
from app.libs.low_level_search import FocalRule
from app.libs.model import Configuration, SuboptFactor, step_conflicts, sum_of_cost, validate_plan
from app.libs.penalty_store import PenaltyStore

logger = logging.getLogger(__name__)


class Solver(str, Enum):
    DAG = "dag"
    ECBS = "ecbs"


class EpisodeStatus(str, Enum):
    SOLVED = "solved"
    TIMEOUT = "timeout"
    ITERATION_CAP = "iteration-cap"
    PLANNER_FAILURE = "planner-failure"


class IterationRecord(BaseModel):
    iteration: int
    config_hash: str
    groups: list[list[int]]
    merges: int
    solve_calls: int
    plan_time_s: float | None
    step_cost: int
    executed_steps: int = 1
    store_version: int
    store_size: int


class EpisodeSummary(BaseModel):
    instance: str
    solver: Solver
    window: int
    subopt: str
    agents: int
    status: EpisodeStatus
    iterations: int
    sum_of_cost: int | None = Field(None, description="Omitted unless the episode was solved")
    cost_per_agent: float | None = Field(None, description="Omitted unless the episode was solved")
    max_iteration_s: float | None = None
    total_planning_s: float | None = None
    merges: int
    group_sizes: dict[int, int] = Field(default_factory=dict, description="Group size -> count, last iteration")
    penalty_entries: int
    error: str | None = None


def config_hash(config: Configuration) -> str:
    return hashlib.sha1(repr(tuple(config)).encode()).hexdigest()[:12]


def default_iteration_cap(instance: Instance) -> int:
    longest = max((instance.h(t.agent_id, t.start) for t in instance.tasks), default=0)
    return max(1, 10 * instance.num_agents * longest)


def execute_step(current: Configuration, plan: PlannerResult, index: int = 1) -> Configuration:
    """Configuration reached by executing planned move ``index``; validates the move."""
    if plan.steps[index - 1] != tuple(current):
        raise ContractViolation("Plan is not anchored at the current configuration")
    nxt = plan.steps[index]
    for a, (u, v) in enumerate(zip(current, nxt)):
        if u != v and abs(u[0] - v[0]) + abs(u[1] - v[1]) != 1:
            raise ContractViolation(f"Agent {a}: {u} -> {v} is not a legal move")
    conflicts = step_conflicts(tuple(current), nxt)
    if conflicts:
        raise ContractViolation(f"Executed step collides: {conflicts[0]}")
    return nxt


@dataclass
class EpisodeResult:
    instance: Instance
    solver: Solver
    window: int
    w: SuboptFactor
    status: EpisodeStatus
    executed: list[Configuration]
    iterations: int
    iteration_times: list[float] = field(default_factory=list)
    merges: int = 0
    group_sizes: dict[int, int] = field(default_factory=dict)
    store: PenaltyStore | None = None
    records: list[IterationRecord] = field(default_factory=list)
    error: str | None = None

    @property
    def solved(self) -> bool:
        return self.status is EpisodeStatus.SOLVED

    @property
    def sum_of_cost(self) -> int:
        return sum_of_cost(self.instance.tasks, self.executed)

    def summary(self, record_timings: bool = True) -> EpisodeSummary:
        soc = self.sum_of_cost if self.solved else None
        return EpisodeSummary(
            instance=self.instance.name,
            solver=self.solver,
            window=self.window,
            subopt=str(self.w),
            agents=self.instance.num_agents,
            status=self.status,
            iterations=self.iterations,
            sum_of_cost=soc,
            cost_per_agent=soc / self.instance.num_agents if soc is not None else None,
            max_iteration_s=max(self.iteration_times, default=0.0) if record_timings else None,
            total_planning_s=sum(self.iteration_times) if record_timings else None,
            merges=self.merges,
            group_sizes=self.group_sizes,
            penalty_entries=len(self.store) if self.store is not None else 0,
            error=self.error,
        )

    def write_log(self, path: str | Path, record_timings: bool = True) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as f:
            for record in self.records:
                if not record_timings:
                    record = record.model_copy(update={"plan_time_s": None})
                f.write(record.model_dump_json() + "\n")
            f.write(self.summary(record_timings).model_dump_json() + "\n")
        return path


def update_penalties(store: PenaltyStore, config: Configuration, result: PlannerResult) -> None:
    for solution in result.groups:
        members = solution.group.members
        update = store.apply_terminal_update(
            solution.group,
            tuple(config[a] for a in members),
            solution.terminal,
            store.w.unit(solution.cost),
            solution.h_terminal,
        )
        store.apply_intermediate_updates(solution.group, solution.group_steps(), update)


def run_episode(
    instance: Instance,
    solver: Solver | str,
    window: int,
    w: SuboptFactor | str,
    timeout_s: float = 60.0,
    iteration_cap: int | None = None,
    *,
    execute_full_window: bool = False,
    store: PenaltyStore | None = None,
    low_level_rule: FocalRule = FocalRule.DAG,
    trace: CTTrace | None = None,
) -> EpisodeResult:
    """Drive one instance to its goals or to a stopping condition.

    Only planning time counts against ``timeout_s``.
    """
    solver = Solver(solver)
    w = SuboptFactor.parse(w)
    if window < 1:
        raise ContractViolation(f"Window must be at least 1, got {window}")
    cap = iteration_cap if iteration_cap is not None else default_iteration_cap(instance)
    if solver is Solver.DAG and store is None:
        store = PenaltyStore(instance, w)

    goals = instance.goals
    config = instance.starts
    result = EpisodeResult(
        instance=instance, solver=solver, window=window, w=w, status=EpisodeStatus.SOLVED,
        executed=[config], iterations=0, store=store,
    )
    planning_time = 0.0
    # store version seen when planning from each configuration, before learning
    seen: dict[Configuration, int] = {}

    while config != goals:
        if result.iterations >= cap:
            logger.warning("%s: iteration cap %d reached", instance.name, cap)
            result.status = EpisodeStatus.ITERATION_CAP
            break
        remaining = timeout_s - planning_time
        if remaining <= 0:
            result.status = EpisodeStatus.TIMEOUT
            break
        # a revisit with nothing learned since the last one commits to the whole window
        recurring = store is not None and seen.get(config) == store.version
        if store is not None:
            seen[config] = store.version
        t0 = time.monotonic()
        deadline = t0 + remaining
        try:
            if solver is Solver.DAG:
                planned = plan_step(
                    instance, config, store, window, w, deadline, low_level_rule=low_level_rule, trace=trace
                )
            else:
                planned = solve_windowed_ecbs_baseline(instance, config, window, w, deadline, trace=trace)
        except PlannerTimeout as e:
            result.iteration_times.append(time.monotonic() - t0)
            result.status, result.error = EpisodeStatus.TIMEOUT, str(e)
            break
        except PlannerFailure as e:
            result.iteration_times.append(time.monotonic() - t0)
            result.status, result.error = EpisodeStatus.PLANNER_FAILURE, str(e)
            break
        elapsed = time.monotonic() - t0
        planning_time += elapsed
        result.iteration_times.append(elapsed)
        if planning_time > timeout_s:
            result.status = EpisodeStatus.TIMEOUT
            break

        if store is not None:
            update_penalties(store, config, planned)

        before = config
        if recurring and not execute_full_window and window > 1:
            logger.debug("%s: configuration %s recurred without learning", instance.name, config_hash(config))
        moves = window if execute_full_window or recurring else 1
        executed = 0
        for index in range(1, moves + 1):
            config = execute_step(config, planned, index)
            result.executed.append(config)
            executed += 1
            if config == goals:
                break
        result.iterations += 1
        result.merges += planned.merges
        result.group_sizes = dict(sorted(Counter(len(g) for g in planned.disjoint_groups).items()))
        result.records.append(
            IterationRecord(
                iteration=result.iterations,
                config_hash=config_hash(before),
                groups=[list(g.members) for g in planned.disjoint_groups],
                merges=planned.merges,
                solve_calls=planned.solve_calls,
                plan_time_s=elapsed,
                step_cost=sum_of_cost(instance.tasks, planned.steps, executed),
                executed_steps=executed,
                store_version=store.version if store is not None else 0,
                store_size=len(store) if store is not None else 0,
            )
        )
        logger.debug("%s iteration %d: %d groups, %d merges", instance.name, result.iterations, len(planned.groups), planned.merges)

    if result.solved:
        validate_plan(instance.grid, result.executed)
        logger.info("%s solved in %d iterations, cost %d", instance.name, result.iterations, result.sum_of_cost)
    else:
        logger.info("%s ended with status %s after %d iterations", instance.name, result.status.value, result.iterations)
    return result
