from __future__ import annotations

import numpy as np
import pytest

from app.libs.errors import MapParseError, ScenarioError
from app.libs.grid_world import (
    UNREACHABLE,
    GridMap,
    Instance,
    backward_dijkstra,
    load_instance,
    load_map,
    neighbors,
    parse_map,
    parse_scenario,
    serialize_map,
)


def test_load_tiny_map(data_dir):
    grid = load_map(data_dir / "tiny.map")
    assert (grid.height, grid.width) == (4, 5)
    assert grid.blocked_count == 3
    assert grid.name == "tiny.map"
    assert not grid.is_free((1, 1))
    assert grid.is_free((0, 0))
    assert not grid.is_free((4, 0))
    assert len(grid.free_cells()) == 17
    assert grid.free_cells()[0] == (0, 0)


def test_blocking_and_passable_characters():
    grid = parse_map("type octile\nheight 1\nwidth 6\nmap\n.G@OTW\n")
    assert [grid.is_free((0, c)) for c in range(6)] == [True, True, False, False, False, False]


@pytest.mark.parametrize(
    "text, line",
    [
        ("height 2\nwidth 2\nmap\n..\n..\n", 1),
        ("type octile\nheight 2\nwidth 2\nmap\n..\n...\n", 6),
        ("type octile\nheight 2\nwidth 2\nmap\n..\n.x\n", 6),
        ("type octile\nheight 2\nwidth 2\nmap\n..\n..\nextra\n", 7),
        ("type octile\nheight 3\nwidth 2\nmap\n..\n..\n", 6),
    ],
)
def test_parse_map_reports_line(text, line):
    with pytest.raises(MapParseError) as err:
        parse_map(text)
    assert err.value.line == line


def test_parse_map_rejects_bad_dimensions():
    with pytest.raises(MapParseError):
        parse_map("type octile\nheight two\nwidth 2\nmap\n..\n..\n")
    with pytest.raises(MapParseError):
        parse_map("type octile\nheight 0\nwidth 2\nmap\n")


def test_serialized_map_parses_back(data_dir):
    grid = load_map(data_dir / "tiny.map")
    again = parse_map(serialize_map(grid))
    assert (again.blocked == grid.blocked).all()


def test_neighbors_wait_first(open_grid):
    grid = open_grid(3, 3)
    assert neighbors(grid, (1, 1)) == [(1, 1), (0, 1), (2, 1), (1, 0), (1, 2)]
    assert neighbors(grid, (0, 0)) == [(0, 0), (1, 0), (0, 1)]


def test_distance_field_routes_around_obstacles(data_dir):
    grid = load_map(data_dir / "tiny.map")
    field = grid.distance_field((3, 0))
    assert field[(3, 4)] == 6
    assert field[(3, 0)] == 0
    assert grid.distance_field((3, 0)) is field


def test_distance_field_marks_other_components():
    grid = parse_map("type octile\nheight 1\nwidth 3\nmap\n.@.\n")
    field = backward_dijkstra(grid, (0, 0))
    assert field[(0, 2)] == UNREACHABLE
    assert not field.reachable((0, 2))


def test_backward_search_from_blocked_goal():
    grid = parse_map("type octile\nheight 1\nwidth 3\nmap\n.@.\n")
    with pytest.raises(ScenarioError):
        backward_dijkstra(grid, (0, 1))


def test_parse_scenario(data_dir):
    grid = load_map(data_dir / "tiny.map")
    text = (data_dir / "tiny.scen").read_text()
    tasks = parse_scenario(text, grid)
    assert len(tasks) == 4
    assert (tasks[0].start, tasks[0].goal) == ((0, 0), (2, 4))
    assert (tasks[1].start, tasks[1].goal) == ((2, 0), (0, 3))
    assert [t.agent_id for t in tasks] == [0, 1, 2, 3]
    assert len(parse_scenario(text, grid, 2)) == 2


def test_parse_scenario_too_few_rows(data_dir):
    grid = load_map(data_dir / "tiny.map")
    with pytest.raises(ScenarioError):
        parse_scenario((data_dir / "tiny.scen").read_text(), grid, 5)


def test_parse_scenario_accepts_space_separated_rows(data_dir):
    grid = load_map(data_dir / "tiny.map")
    tasks = parse_scenario("version 1\n0 tiny.map 5 4 0 0 4 2 6\n", grid)
    assert tasks[0].goal == (2, 4)


@pytest.mark.parametrize(
    "text, row",
    [
        ("0\ttiny.map\t5\t4\t0\t0\t4\t2\t6\n", 1),
        ("version 1\n0\ttiny.map\t6\t4\t0\t0\t4\t2\t6\n", 2),
        ("version 1\n0\ttiny.map\t5\t4\t1\t1\t4\t2\t6\n", 2),
        ("version 1\n0\ttiny.map\t5\t4\t0\t0\t4\n", 2),
        ("version 1\n0\ttiny.map\t5\t4\tx\t0\t4\t2\t6\n", 2),
    ],
)
def test_parse_scenario_reports_row(data_dir, text, row):
    grid = load_map(data_dir / "tiny.map")
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text, grid)
    assert err.value.row == row


def test_scenario_optimal_length_mismatch_is_tolerated(data_dir):
    grid = load_map(data_dir / "tiny.map")
    tasks = parse_scenario("version 1\n0\ttiny.map\t5\t4\t0\t0\t4\t2\t9.5\n", grid)
    assert len(tasks) == 1


def test_unreachable_goal_in_scenario():
    grid = parse_map("type octile\nheight 1\nwidth 3\nmap\n.@.\n")
    with pytest.raises(ScenarioError):
        parse_scenario("version 1\n0\tm\t3\t1\t0\t0\t2\t0\t2\n", grid)


def test_load_instance(data_dir):
    instance = load_instance(data_dir / "tiny.map", data_dir / "tiny.scen", 3)
    assert instance.name == "tiny-n3"
    assert instance.num_agents == 3
    assert instance.starts == ((0, 0), (2, 0), (3, 4))
    assert instance.h(0, (0, 0)) == 6
    assert instance.h_sum([0, 1], [(0, 0), (2, 0)]) == 11


def test_instance_rejects_shared_cells(open_grid):
    grid = open_grid(2, 2)
    with pytest.raises(ScenarioError):
        Instance.from_cells(grid, [(0, 0), (0, 0)], [(1, 1), (1, 0)])
    with pytest.raises(ScenarioError):
        Instance.from_cells(grid, [(0, 0), (0, 1)], [(1, 1), (1, 1)])


def _relaxed_distances(blocked: np.ndarray, goal) -> np.ndarray:
    """Distances by repeated neighbour relaxation; inf where the goal is out of reach."""
    dist = np.full(blocked.shape, np.inf)
    dist[goal] = 0
    while True:
        padded = np.pad(dist, 1, constant_values=np.inf)
        best = np.minimum.reduce(
            [padded[:-2, 1:-1], padded[2:, 1:-1], padded[1:-1, :-2], padded[1:-1, 2:]]
        )
        relaxed = np.where(blocked, np.inf, np.minimum(dist, best + 1))
        if np.array_equal(relaxed, dist):
            return dist
        dist = relaxed


@pytest.mark.parametrize("seed", range(12))
def test_distance_field_matches_relaxation(seed):
    rng = np.random.default_rng(seed)
    height, width = rng.integers(1, 17, size=2)
    grid = GridMap(blocked=rng.random((height, width)) < 0.25, name=f"random-{seed}")
    free = grid.free_cells()
    if not free:
        pytest.skip("no free cell")
    goal = free[int(rng.integers(len(free)))]
    field = backward_dijkstra(grid, goal)
    expected = _relaxed_distances(grid.blocked, goal)
    actual = np.where(field.dist == UNREACHABLE, np.inf, field.dist)
    assert np.array_equal(actual, expected)

    for cell in free:
        if not field.reachable(cell):
            continue
        for nxt in neighbors(grid, cell)[1:]:
            assert abs(field[cell] - field[nxt]) <= 1
