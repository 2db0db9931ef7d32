"""Directional comparison on the published random-32-32-20 benchmark.

Needs WINMAPF_BENCH_DIR pointing at a directory holding random-32-32-20.map and
its random-1..N .scen files. Run with ``pytest -m bench``.
"""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from app.libs.bench import ExperimentConfig, run_benchmark, summarize_results
from app.libs.grid_world import load_map

pytestmark = pytest.mark.bench

BENCH_DIR = os.environ.get("WINMAPF_BENCH_DIR")
MAP = "random-32-32-20.map"


@pytest.fixture(scope="module")
def bench_dir() -> Path:
    if not BENCH_DIR:
        pytest.skip("WINMAPF_BENCH_DIR is not set")
    path = Path(BENCH_DIR)
    if not (path / MAP).exists():
        pytest.skip(f"{MAP} not found in {path}")
    return path


def test_dag_success_rate_is_not_below_windowed_ecbs(bench_dir, tmp_path):
    scens = sorted(bench_dir.glob("random-32-32-20-random-*.scen"))[:10]
    if len(scens) < 10:
        pytest.skip("needs at least 10 scenario files")
    frame = run_benchmark(
        ExperimentConfig(
            map_path=bench_dir / MAP,
            scen_paths=scens,
            agent_counts=[20, 40],
            solvers=["dag", "ecbs"],
            windows=[1, 2],
            subopts=["2"],
            timeout_s=60,
            workers=int(os.environ.get("WINMAPF_WORKERS", "1")),
        )
    )
    assert set(frame["scen"]) == {s.name for s in scens}
    summary = summarize_results(frame)
    rates = summary.pivot_table(index=["agents", "window"], columns="solver", values="success_rate")
    assert (rates["dag"] >= rates["ecbs"]).all()


def test_random_map_occupancy(bench_dir):
    grid = load_map(bench_dir / MAP)
    assert (grid.height, grid.width) == (32, 32)
    assert grid.blocked_count == 205
    assert len(grid.free_cells()) == 32 * 32 - 205
