from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from app.libs.grid_world import GridMap, Instance, parse_map

DATA = Path(__file__).parent / "data"


def grid_from_rows(*rows: str, name: str = "") -> GridMap:
    text = f"type octile\nheight {len(rows)}\nwidth {len(rows[0])}\nmap\n" + "\n".join(rows) + "\n"
    return parse_map(text, name=name)


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def open_grid():
    def build(height: int, width: int) -> GridMap:
        return GridMap(blocked=np.zeros((height, width), dtype=bool), name=f"open-{height}x{width}")

    return build


@pytest.fixture
def make_instance():
    """make_instance(["...", ".@."], starts, goals) on a grid given as map rows."""

    def build(rows, starts, goals, name: str = "test") -> Instance:
        return Instance.from_cells(grid_from_rows(*rows, name=name), starts, goals, name=name)

    return build


@pytest.fixture
def corridor_swap(make_instance) -> Instance:
    # two agents swap ends of a corridor with one passing bay under the middle
    return make_instance([".....", "@@.@@"], [(0, 0), (0, 4)], [(0, 4), (0, 0)], name="corridor-swap-5")
