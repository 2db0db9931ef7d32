import logging

from fastapi import APIRouter, HTTPException
from pydantic import BaseModel, Field

from app.env import get_settings
from app.libs.bench import COLUMNS, BenchmarkRow, ExperimentConfig, build_jobs, run_job
from app.libs.executor import Solver
from app.libs.oracle import GapRecord, check_global_vs_group_gap

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/benchmark", tags=["Benchmark"])


class ColumnsResponse(BaseModel):
    """CSV header emitted by the benchmark runner"""
    columns: list[str]


class SuiteRequest(BaseModel):
    """Solver/window/suboptimality grid to run over the deadlock suite"""
    solvers: list[Solver] = Field(default_factory=lambda: [Solver.DAG, Solver.ECBS])
    windows: list[int] = Field(default_factory=lambda: [1, 2])
    subopts: list[str] = Field(default_factory=lambda: ["1", "2"])
    seed: int = 0
    include_blocked_goal: bool = False
    timeout_s: float | None = Field(None, gt=0)
    iteration_cap: int | None = Field(None, gt=0)


class GapRequest(BaseModel):
    """Optimal costs and plan costs of two groups under one suboptimality"""
    opt1: int = Field(10, gt=0)
    opt2: int = Field(40, gt=0)
    cost1: int = Field(30, ge=0)
    cost2: int = Field(45, ge=0)
    subopt: str = "2"


@router.get("/columns", response_model=ColumnsResponse)
def columns():
    """Documented benchmark CSV columns, in output order"""
    return ColumnsResponse(columns=COLUMNS)


@router.post("/deadlock-suite", response_model=list[BenchmarkRow])
def deadlock_suite(request: SuiteRequest):
    """Run the deadlock suite sequentially and return one row per episode"""
    try:
        config = ExperimentConfig(
            deadlock_suite=True,
            include_blocked_goal=request.include_blocked_goal,
            solvers=request.solvers,
            windows=request.windows,
            subopts=request.subopts,
            seed=request.seed,
            timeout_s=request.timeout_s or get_settings().timeout_s,
            iteration_cap=request.iteration_cap,
        )
    except ValueError as e:
        raise HTTPException(status_code=400, detail=f"Invalid suite request: {str(e)}")
    try:
        rows = [run_job(job) for job in build_jobs(config)]
        logger.info(f"Deadlock suite finished: {sum(r.status == 'solved' for r in rows)}/{len(rows)} solved")
        return rows
    except Exception as e:
        logger.error(f"Deadlock suite failed: {e}")
        raise HTTPException(status_code=500, detail=f"Deadlock suite failed: {str(e)}")


@router.post("/gap-check", response_model=GapRecord)
def gap_check(request: GapRequest):
    """Compare a global suboptimality bound against the per-group bounds"""
    try:
        return check_global_vs_group_gap(request.opt1, request.opt2, request.cost1, request.cost2, request.subopt)
    except ValueError as e:
        raise HTTPException(status_code=400, detail=f"Invalid gap request: {str(e)}")
