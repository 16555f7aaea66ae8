import json
from datetime import UTC, datetime, timedelta
from itertools import combinations

import numpy as np
import pytest

from core.services.complex_service import ComplexService, SimplicialComplex
from core.services.drifter_service import Ping, Trajectory
from core.services.hex_grid_service import BBox, HexGridComplex, HexGridService


def random_simplicial_complex(seed: int, vertices: int = 7, density: float = 0.6) -> SimplicialComplex:
    """
    Random complex on `vertices` vertices: each edge is kept with probability `density`, and each triangle or
    tetrahedron whose faces are all present is filled with the same probability.
    """
    rng = np.random.default_rng(seed)
    edges = {edge for edge in combinations(range(vertices), 2) if rng.random() < density}
    triangles = {
        triangle
        for triangle in combinations(range(vertices), 3)
        if set(combinations(triangle, 2)) <= edges and rng.random() < density
    }
    tetrahedra = {
        tetrahedron
        for tetrahedron in combinations(range(vertices), 4)
        if set(combinations(tetrahedron, 3)) <= triangles and rng.random() < density
    }
    tops = [(v,) for v in range(vertices)] + sorted(edges) + sorted(triangles) + sorted(tetrahedra)
    return ComplexService.build_simplicial_complex(tops, label=f"random{seed}")


@pytest.fixture
def random_complex():
    return random_simplicial_complex


@pytest.fixture
def filled_triangle_with_tail():
    """Triangle (0, 1, 2) filled, plus the dangling edge (2, 3)."""
    return ComplexService.build_simplicial_complex([(0, 1, 2), (2, 3)], label="tri")


@pytest.fixture
def write_document(tmp_path):
    """Write a JSON complex document and return its path as a string."""

    def write(document, name="complex.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document))
        return str(path)

    return write


@pytest.fixture
def unit_grid() -> HexGridComplex:
    """14 hexagons of size 0.3 over the unit box; hexagon 5 is the only one with six neighbors inside."""
    return HexGridService.build_hex_grid(BBox(north=1, west=0, south=0, east=1), 0.3)


def trajectory_through(grid: HexGridComplex, buoy_id: str, hexagons, start: datetime) -> Trajectory:
    """A buoy that pings once a day at the centers of the given hexagons, in order."""
    pings = tuple(
        Ping(start + timedelta(days=n), grid.cell_by_id[hex_id].lat, grid.cell_by_id[hex_id].lon)
        for n, hex_id in enumerate(hexagons)
    )
    return Trajectory(buoy_id=buoy_id, pings=pings)


@pytest.fixture
def make_trajectory(unit_grid):
    def make(buoy_id, hexagons, start):
        return trajectory_through(unit_grid, buoy_id, hexagons, start)

    return make


@pytest.fixture
def unit_grid_trajectories(unit_grid):
    """
    Six buoys drifting north along the first two hexagon columns, each once in June 2000 and once in June 2001, so
    every buoy contributes traversals to both years.
    """
    paths = {
        "a": [0, 1, 2, 3],
        "b": [4, 5, 6],
        "c": [0, 1, 2],
        "d": [4, 5],
        "e": [1, 2, 3],
        "f": [5, 6],
    }
    trajectories = []
    for buoy_id, path in paths.items():
        first = trajectory_through(unit_grid, buoy_id, path, datetime(2000, 6, 1, tzinfo=UTC))
        second = trajectory_through(unit_grid, buoy_id, path, datetime(2001, 6, 1, tzinfo=UTC))
        trajectories.append(Trajectory(buoy_id=buoy_id, pings=first.pings + second.pings))
    return trajectories
