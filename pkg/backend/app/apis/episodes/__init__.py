import logging
from typing import Optional

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from app.env import get_settings
from app.libs.errors import MapParseError, OracleRefusal, ScenarioError, WinMapfError
from app.libs.executor import EpisodeSummary, Solver, run_episode
from app.libs.grid_world import Instance, parse_map, parse_scenario
from app.libs.model import SuboptFactor
from app.libs.oracle import VerificationRecord, verify_penalty_admissibility

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/episodes", tags=["Episodes"])


class TaskSpec(BaseModel):
    """Start and goal of one agent, as (row, col)"""
    start: tuple[int, int]
    goal: tuple[int, int]


class EpisodeRequest(BaseModel):
    """One windowed planning episode on a posted map"""
    map_text: str = Field(..., description="Contents of a .map file")
    scen_text: Optional[str] = Field(None, description="Contents of a .scen file; alternative to tasks")
    tasks: Optional[list[TaskSpec]] = Field(None, description="Explicit start/goal list; alternative to scen_text")
    agents: Optional[int] = Field(None, gt=0, description="Number of scenario rows to use")
    solver: Solver = Solver.DAG
    window: int = Field(1, ge=1)
    subopt: str = Field("1", description="Suboptimality literal, e.g. 3/2 or 1.5")
    timeout_s: Optional[float] = Field(None, gt=0, description="Defaults to WINMAPF_TIMEOUT_S")
    iteration_cap: Optional[int] = Field(None, gt=0)


def build_instance(request: EpisodeRequest) -> Instance:
    grid = parse_map(request.map_text, name="posted.map")
    if request.tasks:
        return Instance.from_cells(
            grid, [t.start for t in request.tasks], [t.goal for t in request.tasks], name="posted"
        )
    if request.scen_text:
        tasks = parse_scenario(request.scen_text, grid, request.agents)
        return Instance(grid=grid, tasks=tuple(tasks), name=f"posted-n{len(tasks)}")
    raise ScenarioError("Either scen_text or tasks is required")


@router.post("/run", response_model=EpisodeSummary)
def run(request: EpisodeRequest):
    """Run one episode to completion (or to its timeout / iteration cap) and summarize it"""
    try:
        instance = build_instance(request)
        w = SuboptFactor.parse(request.subopt)
        timeout = request.timeout_s or get_settings().timeout_s
        logger.info(f"Running {request.solver.value} episode, {instance.num_agents} agents, W={request.window}, w={w}")
        result = run_episode(instance, request.solver, request.window, w, timeout, request.iteration_cap)
        return result.summary()
    except (MapParseError, ScenarioError, ValueError) as e:
        raise HTTPException(status_code=400, detail=f"Invalid episode input: {str(e)}")
    except WinMapfError as e:
        logger.error(f"Episode failed: {e}")
        raise HTTPException(status_code=500, detail=f"Episode failed: {str(e)}")


class VerifyResponse(BaseModel):
    """Episode summary plus one admissibility record per learned penalty entry"""
    summary: EpisodeSummary
    records: list[VerificationRecord]
    violations: int


@router.post("/verify", response_model=VerifyResponse)
def verify(request: EpisodeRequest):
    """Run a DAG episode, then check every learned penalty against the exhaustive oracle"""
    if request.solver is not Solver.DAG:
        raise HTTPException(status_code=400, detail="Only dag episodes learn penalties")
    try:
        instance = build_instance(request)
        w = SuboptFactor.parse(request.subopt)
        timeout = request.timeout_s or get_settings().timeout_s
        result = run_episode(instance, Solver.DAG, request.window, w, timeout, request.iteration_cap)
        records = verify_penalty_admissibility(result.store, get_settings().oracle_max_agents)
        return VerifyResponse(
            summary=result.summary(), records=records, violations=sum(not r.passed for r in records)
        )
    except OracleRefusal as e:
        raise HTTPException(status_code=422, detail=f"Instance too large to verify: {str(e)}")
    except (MapParseError, ScenarioError, ValueError) as e:
        raise HTTPException(status_code=400, detail=f"Invalid episode input: {str(e)}")
    except WinMapfError as e:
        logger.error(f"Verification failed: {e}")
        raise HTTPException(status_code=500, detail=f"Verification failed: {str(e)}")
