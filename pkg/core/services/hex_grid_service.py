from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType

import networkx as nx

from core.exceptions import EmptyGridException, ParameterException
from core.services.complex_service import ComplexService, SimplicialComplex

logger = logging.getLogger(__name__)

Axial = tuple[int, int]

# Flat-top axial neighbor directions, counter-clockwise. Consecutive directions are themselves neighbors, so each
# consecutive pair closes a triangle with the center cell.
_DIRECTIONS: tuple[Axial, ...] = ((1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1))

_EPSILON = 1e-9


@dataclass(frozen=True)
class BBox:
    """Latitude/longitude rectangle in degrees."""

    north: float
    west: float
    south: float
    east: float

    def __post_init__(self) -> None:
        if not (self.north > self.south and self.east > self.west):
            raise ParameterException(
                f"Degenerate bounding box north={self.north}, west={self.west}, south={self.south}, east={self.east}"
            )

    @classmethod
    def parse(cls, value: str) -> BBox:
        """Parse `north,west,south,east`, e.g. `25,-90,10,-55`."""
        try:
            north, west, south, east = (float(part) for part in value.split(","))
        except ValueError as e:
            raise ParameterException(f"Bounding box must be 'north,west,south,east', got {value!r}") from e
        return cls(north=north, west=west, south=south, east=east)

    def contains(self, lat: float, lon: float) -> bool:
        return self.south <= lat <= self.north and self.west <= lon <= self.east

    def __str__(self) -> str:
        return f"{self.north:g},{self.west:g},{self.south:g},{self.east:g}"


@dataclass(frozen=True)
class HexCell:
    id: int
    q: int
    r: int
    lat: float
    lon: float


@dataclass(frozen=True, eq=False)
class HexGridComplex:
    """
    Hexagonal grid over a bounding box as a simplicial complex: a vertex per water hexagon (vertex id = hexagon id),
    an edge per pair of hexagons sharing a side, and a filled triangle per triple of hexagons meeting at a corner.
    """

    bbox: BBox
    hex_size: float
    cells: tuple[HexCell, ...]
    excluded: frozenset[int]
    complex_: SimplicialComplex
    axial_ids: Mapping[Axial, int] = field(repr=False)

    @property
    def side(self) -> float:
        """Center-to-corner distance in degrees; `hex_size` is the center-to-center spacing within a column."""
        return self.hex_size / math.sqrt(3)

    @cached_property
    def cell_by_id(self) -> Mapping[int, HexCell]:
        return MappingProxyType({cell.id: cell for cell in self.cells})

    @cached_property
    def graph(self) -> nx.Graph:
        """Hexagon adjacency graph (the 1-skeleton of the complex)."""
        graph = nx.Graph()
        graph.add_nodes_from(cell.id for cell in self.cells)
        graph.add_edges_from(self.complex_.simplices(1))
        return graph

    def axial(self, lat: float, lon: float) -> Axial | None:
        """Axial coordinates of the hexagon containing a point, or None outside the bounding box."""
        if not self.bbox.contains(lat, lon):
            return None
        x = (lon - self.bbox.west) / self.side
        y = (lat - self.bbox.south) / self.side
        q = 2.0 / 3.0 * x
        r = y / math.sqrt(3) - q / 2.0
        return _cube_round(q, r)

    def locate(self, lat: float, lon: float) -> int | None:
        """Id of the water hexagon containing a point, or None if the point falls outside the grid or on land."""
        axial = self.axial(lat, lon)
        if axial is None:
            return None
        hex_id = self.axial_ids.get(axial)
        if hex_id is None or hex_id in self.excluded:
            return None
        return hex_id

    def neighbors(self, hex_id: int) -> list[int]:
        return sorted(self.graph.neighbors(hex_id))

    def are_adjacent(self, a: int, b: int) -> bool:
        return bool(self.graph.has_edge(a, b))

    def bridge(self, source: int, target: int) -> list[int] | None:
        """
        Shortest hexagon path from source to target (both included). Breadth-first search visits neighbors in
        ascending id order, so ties go to the smallest ids. None if the two hexagons are not connected.
        """
        if source == target:
            return [source]
        predecessors = dict(nx.bfs_predecessors(self.graph, source, sort_neighbors=sorted))
        if target not in predecessors:
            return None
        path = [target]
        while path[-1] != source:
            path.append(predecessors[path[-1]])
        return path[::-1]


def _cube_round(q: float, r: float) -> Axial:
    s = -q - r
    rq, rr, rs = round(q), round(r), round(s)
    dq, dr, ds = abs(rq - q), abs(rr - r), abs(rs - s)
    if dq > dr and dq > ds:
        rq = -rr - rs
    elif dr > ds:
        rr = -rq - rs
    return int(rq), int(rr)


class HexGridService:
    """
    Builds the hexagonal-grid complex used to discretize drifter trajectories.
    """

    @staticmethod
    def enumerate_cells(bbox: BBox, hex_size: float) -> list[HexCell]:
        """
        All hexagons of a flat-top axial layout on the equirectangular lat/lon plane whose centers lie inside the box.
        Hexagon (0, 0) is centered on the south-west corner; ids run column by column (q outer, r inner).
        """
        if hex_size <= 0:
            raise ParameterException(f"Hexagon size must be positive, got {hex_size}")

        side = hex_size / math.sqrt(3)
        width = bbox.east - bbox.west
        height = bbox.north - bbox.south
        cells: list[HexCell] = []
        for q in range(int(math.floor(width / (1.5 * side) + _EPSILON)) + 1):
            r_low = math.ceil(-q / 2 - _EPSILON)
            r_high = math.floor(height / hex_size - q / 2 + _EPSILON)
            for r in range(r_low, r_high + 1):
                cells.append(
                    HexCell(
                        id=len(cells),
                        q=q,
                        r=r,
                        lat=bbox.south + hex_size * (r + q / 2),
                        lon=bbox.west + 1.5 * side * q,
                    )
                )
        return cells

    @staticmethod
    def build_hex_grid(bbox: BBox, hex_size: float, land_mask: Iterable[int] = ()) -> HexGridComplex:
        """
        Raises `EmptyGridException` if no water hexagon is left. Masked hexagons disappear together with their edges
        and triangles, which can leave holes in the complex.
        """
        cells = HexGridService.enumerate_cells(bbox, hex_size)
        all_ids = {cell.id for cell in cells}
        excluded = frozenset(int(hex_id) for hex_id in land_mask)
        unknown = excluded - all_ids
        if unknown:
            logger.warning(f"[HexGridService] Ignoring {len(unknown)} masked ids that are not on the grid")
        excluded &= all_ids

        water = [cell for cell in cells if cell.id not in excluded]
        if not water:
            raise EmptyGridException(f"No water hexagons in {bbox} at size {hex_size}")

        axial_ids = {(cell.q, cell.r): cell.id for cell in cells}
        water_ids = {cell.id for cell in water}
        simplices: list[tuple[int, ...]] = []
        for cell in water:
            simplices.append((cell.id,))
            around = [axial_ids.get((cell.q + dq, cell.r + dr)) for dq, dr in _DIRECTIONS]
            around_water = [hex_id if hex_id in water_ids else None for hex_id in around]
            for n, neighbor in enumerate(around_water):
                if neighbor is None:
                    continue
                simplices.append(tuple(sorted((cell.id, neighbor))))
                following = around_water[(n + 1) % len(_DIRECTIONS)]
                if following is not None:
                    simplices.append(tuple(sorted((cell.id, neighbor, following))))

        complex_ = ComplexService.build_simplicial_complex(simplices, label=f"hex{hex_size:g}")
        logger.info(
            f"[HexGridService] Built hex grid over {bbox} at size {hex_size}: {len(water)} hexagons "
            f"({len(excluded)} masked), {complex_.count(1)} edges, {complex_.count(2)} triangles"
        )
        return HexGridComplex(
            bbox=bbox,
            hex_size=hex_size,
            cells=tuple(water),
            excluded=excluded,
            complex_=complex_,
            axial_ids=MappingProxyType(axial_ids),
        )
