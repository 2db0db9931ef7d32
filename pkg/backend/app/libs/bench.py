"""Benchmark runner: experiment grids, the deadlock suite, CSV rows and summaries."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from app.libs.errors import ScenarioError
from app.libs.executor import EpisodeResult, Solver, run_episode
from app.libs.grid_world import GridMap, Instance, load_instance, load_map, parse_map
from app.libs.model import SuboptFactor

logger = logging.getLogger(__name__)

COLUMNS = [
    "map",
    "scen",
    "instance",
    "agents",
    "solver",
    "window",
    "subopt",
    "status",
    "iterations",
    "sum_of_cost",
    "cost_per_agent",
    "max_iteration_s",
    "total_planning_s",
    "merges",
    "group_sizes",
    "penalty_entries",
    "error",
]


SETTING_KEYS = ["solver", "map", "window", "subopt"]

class ExperimentConfig(BaseModel):
    map_path: Path | None = None
    scen_paths: list[Path] = Field(default_factory=list, description="One or more .scen files; each contributes one instance per agent count")
    agent_counts: list[int] = Field(default_factory=list)
    solvers: list[Solver] = Field(default_factory=lambda: [Solver.DAG])
    windows: list[int] = Field(default_factory=lambda: [1])
    subopts: list[str] = Field(default_factory=lambda: ["1"])
    timeout_s: float = 60.0
    iteration_cap: int | None = None
    seed: int = 0
    random_instances: int = Field(0, description="Sample this many random task sets per agent count instead of the scen files")
    deadlock_suite: bool = False
    include_blocked_goal: bool = False
    out: Path | None = None
    trace_dir: Path | None = None
    workers: int = 1
    record_timings: bool = True

    @field_validator("windows")
    @classmethod
    def check_windows(cls, v: list[int]) -> list[int]:
        if not v or any(x < 1 for x in v):
            raise ValueError("windows must be a non-empty list of integers >= 1")
        return v

    @field_validator("subopts", mode="before")
    @classmethod
    def check_subopts(cls, v: list[str]) -> list[str]:
        if not v:
            raise ValueError("at least one suboptimality is required")
        return [str(SuboptFactor.parse(x)) for x in v]

    @field_validator("scen_paths", mode="before")
    @classmethod
    def wrap_scen(cls, v):
        if v is None:
            return []
        if isinstance(v, (str, Path)):
            return [v]
        return v

    @field_validator("agent_counts")
    @classmethod
    def check_counts(cls, v: list[int]) -> list[int]:
        if any(n <= 0 for n in v):
            raise ValueError("agent counts must be positive")
        return v

    @model_validator(mode="after")
    def check_sources(self) -> "ExperimentConfig":
        if self.deadlock_suite:
            return self
        if self.map_path is None or not self.agent_counts:
            raise ValueError("map_path and agent_counts are required unless deadlock_suite is set")
        if not self.scen_paths and not self.random_instances:
            raise ValueError("at least one scen path is required unless random_instances > 0")
        return self


class BenchmarkRow(BaseModel):
    map: str
    scen: str
    instance: str
    agents: int
    solver: Solver
    window: int
    subopt: str
    status: str
    iterations: int
    sum_of_cost: int | None = None
    cost_per_agent: float | None = None
    max_iteration_s: float | None = None
    total_planning_s: float | None = None
    merges: int = 0
    group_sizes: str = ""
    penalty_entries: int = 0
    error: str | None = None


def sanitize_key(key: str) -> str:
    """File-name-safe version of an instance or episode label."""
    return re.sub(r"[^a-zA-Z0-9._-]", "_", key)


def format_group_sizes(sizes: dict[int, int]) -> str:
    return ";".join(f"{size}:{n}" for size, n in sorted(sizes.items()))


# -- instance sources ---------------------------------------------------------


def _corridor(length: int, bay: int) -> GridMap:
    blocked = np.ones((2, length), dtype=bool)
    blocked[0, :] = False
    blocked[1, bay] = False
    return GridMap(blocked=blocked, name=f"corridor-{length}")


def _relabel(instance: Instance, rng: np.random.Generator) -> Instance:
    order = rng.permutation(instance.num_agents)
    starts = [instance.starts[i] for i in order]
    goals = [instance.goals[i] for i in order]
    return Instance.from_cells(instance.grid, starts, goals, name=instance.name)


def generate_deadlock_suite(seed: int = 0, include_blocked_goal: bool = False) -> list[Instance]:
    """Small instances where myopic windowed planning tends to stall.

    Corridor swaps (k = 3..7) with one passing bay under the middle cell, a
    T-junction rotation for three agents and a four-agent diagonal swap on a ring.
    Seed 0 keeps the canonical agent order; other seeds relabel agents.
    """
    suite = []
    for k in range(3, 8):
        grid = _corridor(k, k // 2)
        suite.append(Instance.from_cells(grid, [(0, 0), (0, k - 1)], [(0, k - 1), (0, 0)], name=f"corridor-swap-{k}"))

    tee = parse_map("type octile\nheight 3\nwidth 5\nmap\n.....\n@@.@@\n@@.@@\n", name="t-junction")
    suite.append(
        Instance.from_cells(tee, [(0, 0), (0, 4), (2, 2)], [(0, 4), (2, 2), (0, 0)], name="t-junction-rotation")
    )

    ring = parse_map("type octile\nheight 3\nwidth 3\nmap\n...\n.@.\n...\n", name="ring")
    corners = [(0, 0), (0, 2), (2, 2), (2, 0)]
    suite.append(Instance.from_cells(ring, corners, corners[2:] + corners[:2], name="square-swap"))

    if include_blocked_goal:
        for k in range(4, 7):
            b = k // 2
            grid = _corridor(k, b)
            suite.append(Instance.from_cells(grid, [(0, 0), (0, b)], [(0, k - 1), (0, b)], name=f"blocked-goal-{k}"))

    if seed:
        rng = np.random.default_rng(seed)
        suite = [_relabel(inst, rng) for inst in suite]
    return suite


def random_instance(grid: GridMap, num_agents: int, rng: np.random.Generator, name: str = "") -> Instance:
    """Distinct random starts and goals, each goal reachable from its start."""
    free = grid.free_cells()
    if num_agents > len(free):
        raise ScenarioError(f"{num_agents} agents do not fit on {len(free)} free cells")
    for _ in range(100):
        picks = rng.permutation(len(free))[:num_agents]
        starts = [free[i] for i in picks]
        goals: list = []
        for start in starts:
            reach = grid.distance_field(start)
            options = [c for c in free if c not in goals and reach.reachable(c)]
            if not options:
                break
            goals.append(options[int(rng.integers(len(options)))])
        if len(goals) == num_agents:
            return Instance.from_cells(grid, starts, goals, name=name)
    raise ScenarioError(f"Could not sample {num_agents} reachable tasks on {grid.name or 'the map'}")


def build_instances(config: ExperimentConfig) -> list[tuple[str, str, Instance]]:
    """(map label, scen label, instance) triples in a fixed order."""
    if config.deadlock_suite:
        return [(inst.grid.name, "suite", inst) for inst in generate_deadlock_suite(config.seed, config.include_blocked_goal)]
    map_label = config.map_path.name
    if config.random_instances:
        grid = load_map(config.map_path)
        rng = np.random.default_rng(config.seed)
        return [
            (map_label, "random", random_instance(grid, n, rng, name=f"random-n{n}-{k}"))
            for n in config.agent_counts
            for k in range(config.random_instances)
        ]
    return [
        (map_label, scen.name, load_instance(config.map_path, scen, n))
        for scen in config.scen_paths
        for n in config.agent_counts
    ]


# -- running ------------------------------------------------------------------


@dataclass(frozen=True)
class BenchJob:
    map_label: str
    scen_label: str
    instance: Instance
    solver: Solver
    window: int
    subopt: str
    timeout_s: float
    iteration_cap: int | None
    trace_dir: Path | None
    record_timings: bool

    @property
    def label(self) -> str:
        return sanitize_key(f"{self.instance.name}_{self.solver.value}_W{self.window}_w{self.subopt}")


def row_from_result(job: BenchJob, result: EpisodeResult) -> BenchmarkRow:
    summary = result.summary(job.record_timings)
    return BenchmarkRow(
        map=job.map_label,
        scen=job.scen_label,
        instance=job.instance.name,
        agents=job.instance.num_agents,
        solver=job.solver,
        window=job.window,
        subopt=job.subopt,
        status=summary.status.value,
        iterations=summary.iterations,
        sum_of_cost=summary.sum_of_cost,
        cost_per_agent=summary.cost_per_agent,
        max_iteration_s=summary.max_iteration_s,
        total_planning_s=summary.total_planning_s,
        merges=summary.merges,
        group_sizes=format_group_sizes(summary.group_sizes),
        penalty_entries=summary.penalty_entries,
        error=summary.error,
    )


def run_job(job: BenchJob) -> BenchmarkRow:
    try:
        result = run_episode(job.instance, job.solver, job.window, job.subopt, job.timeout_s, job.iteration_cap)
        if job.trace_dir is not None:
            result.write_log(job.trace_dir / f"{job.label}.jsonl", job.record_timings)
            if result.store is not None:
                result.store.dump_jsonl(job.trace_dir / f"{job.label}.penalties.jsonl")
        return row_from_result(job, result)
    except Exception as e:
        logger.exception("Episode %s failed", job.label)
        return BenchmarkRow(
            map=job.map_label,
            scen=job.scen_label,
            instance=job.instance.name,
            agents=job.instance.num_agents,
            solver=job.solver,
            window=job.window,
            subopt=job.subopt,
            status="error",
            iterations=0,
            error=f"{type(e).__name__}: {e}",
        )


def build_jobs(config: ExperimentConfig) -> list[BenchJob]:
    return [
        BenchJob(m, s, inst, solver, window, subopt, config.timeout_s, config.iteration_cap, config.trace_dir, config.record_timings)
        for (m, s, inst), solver, window, subopt in product(
            build_instances(config), config.solvers, config.windows, config.subopts
        )
    ]


def rows_to_frame(rows: list[BenchmarkRow]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump(mode="json") for r in rows], columns=COLUMNS)


def run_benchmark(config: ExperimentConfig) -> pd.DataFrame:
    """One row per (instance, solver, W, w), in that nesting order."""
    jobs = build_jobs(config)
    logger.info("Running %d episodes on %d worker(s)", len(jobs), config.workers)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(run_job, jobs))
    else:
        rows = [run_job(job) for job in jobs]
    frame = rows_to_frame(rows)
    if config.out is not None:
        write_csv(frame, config.out)
    return frame


def write_csv(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def summarize_results(frame: pd.DataFrame) -> pd.DataFrame:
    """Success rate and mean cost per agent per setting; failed rows never enter the cost mean.

    ``max_agents_over_half`` is the largest agent count whose success rate exceeds
    one half, per (solver, map, window, subopt); NaN when no count does.
    """
    frame = frame.copy()
    frame["solved"] = frame["status"] == "solved"
    frame.loc[~frame["solved"], "cost_per_agent"] = np.nan
    keys = ["solver", "map", "agents", "window", "subopt"]
    summary = frame.groupby(keys, sort=True).agg(
        instances=("instance", "count"),
        success_rate=("solved", "mean"),
        mean_cost_per_agent=("cost_per_agent", "mean"),
        max_iteration_s=("max_iteration_s", "max"),
    )
    summary = summary.reset_index()
    passing = summary[summary["success_rate"] > 0.5]
    best = passing.groupby(SETTING_KEYS, sort=True)["agents"].max().rename("max_agents_over_half")
    return summary.merge(best.reset_index(), on=SETTING_KEYS, how="left")
