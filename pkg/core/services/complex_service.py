from __future__ import annotations

import logging
import uuid
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from types import MappingProxyType
from typing import Any, NamedTuple

import numpy as np
import scipy.sparse as sp

from core.exceptions import MalformedComplexException, MalformedSimplexException, ParameterException
from core.services.operators import IndexSpace, SparseOperator

logger = logging.getLogger(__name__)

Simplex = tuple[Any, ...]
CellId = Hashable
BoundaryEntry = tuple[CellId, int]


def _new_label() -> str:
    return uuid.uuid4().hex[:8]


@dataclass(frozen=True)
class SimplicialComplex:
    """
    Oriented simplicial complex. Simplices are strictly ascending vertex tuples, stored per dimension in lexicographic
    order; the ascending vertex order is every simplex's reference orientation.
    """

    vertices: tuple[Any, ...]
    simplices_by_dim: tuple[tuple[Simplex, ...], ...]
    label: str = field(default_factory=_new_label, compare=False)

    @property
    def dimension(self) -> int:
        return len(self.simplices_by_dim) - 1

    def simplices(self, k: int) -> tuple[Simplex, ...]:
        if 0 <= k < len(self.simplices_by_dim):
            return self.simplices_by_dim[k]
        return ()

    def count(self, k: int) -> int:
        return len(self.simplices(k))

    def index(self, k: int) -> Mapping[Simplex, int]:
        """Position of each k-simplex in the canonical order, i.e. its row/column in the boundary matrices."""
        if 0 <= k < len(self._index_maps):
            return self._index_maps[k]
        return MappingProxyType({})

    @cached_property
    def _index_maps(self) -> tuple[Mapping[Simplex, int], ...]:
        return tuple(
            MappingProxyType({simplex: position for position, simplex in enumerate(simplices)})
            for simplices in self.simplices_by_dim
        )


@dataclass(frozen=True, eq=False)
class AbstractCellComplex:
    """
    Cells of any dimension with a signed boundary relation. Geometric attaching maps are not modelled; a cell is an
    opaque hashable id plus the signed list of its (k-1)-dimensional faces.
    """

    cells_by_dim: tuple[tuple[CellId, ...], ...]
    boundary_entries: Mapping[CellId, tuple[BoundaryEntry, ...]]
    label: str = field(default_factory=_new_label)

    @property
    def dimension(self) -> int:
        return len(self.cells_by_dim) - 1

    def cells(self, k: int) -> tuple[CellId, ...]:
        if 0 <= k < len(self.cells_by_dim):
            return self.cells_by_dim[k]
        return ()

    def count(self, k: int) -> int:
        return len(self.cells(k))

    def index(self, k: int) -> Mapping[CellId, int]:
        if 0 <= k < len(self._index_maps):
            return self._index_maps[k]
        return MappingProxyType({})

    @cached_property
    def _index_maps(self) -> tuple[Mapping[CellId, int], ...]:
        return tuple(
            MappingProxyType({cell: position for position, cell in enumerate(cells)}) for cells in self.cells_by_dim
        )


class CellSpec(NamedTuple):
    id: CellId
    dim: int
    boundary: tuple[BoundaryEntry, ...] = ()


Complex = SimplicialComplex | AbstractCellComplex


class ComplexService:
    """
    Builds simplicial and abstract cell complexes and assembles their signed boundary operators.
    """

    @staticmethod
    def build_simplicial_complex(top_simplices: Iterable[Sequence[Any]], label: str | None = None) -> SimplicialComplex:
        """
        Return the downward closure of the given simplices. Vertex ids must be hashable and mutually orderable.
        """
        faces_by_dim: list[set[Simplex]] = []
        for raw in top_simplices:
            simplex = tuple(raw)
            if not simplex:
                raise MalformedSimplexException("Simplices must contain at least one vertex")
            try:
                distinct = set(simplex)
                ordered = tuple(sorted(simplex))
            except TypeError as e:
                raise MalformedSimplexException(f"Vertex ids of {simplex!r} are not hashable and orderable") from e
            if len(distinct) != len(simplex):
                raise MalformedSimplexException(f"Simplex {simplex!r} repeats a vertex")

            while len(faces_by_dim) < len(ordered):
                faces_by_dim.append(set())
            for size in range(1, len(ordered) + 1):
                faces_by_dim[size - 1].update(combinations(ordered, size))

        try:
            simplices_by_dim = tuple(tuple(sorted(faces)) for faces in faces_by_dim)
        except TypeError as e:
            raise MalformedSimplexException("Vertex ids across simplices are not mutually orderable") from e

        vertices = tuple(vertex for (vertex,) in simplices_by_dim[0]) if simplices_by_dim else ()
        complex_ = SimplicialComplex(vertices=vertices, simplices_by_dim=simplices_by_dim, label=label or _new_label())

        logger.debug(
            f"[ComplexService] Built simplicial complex {complex_.label} with counts "
            f"{[len(simplices) for simplices in simplices_by_dim]}"
        )
        return complex_

    @staticmethod
    def temporal_complex(steps: int, lags: Sequence[int] = (1,)) -> SimplicialComplex:
        """
        Time complex on `steps` vertices. With the default lag this is the path graph P_T; extra lags also connect
        each step to the step `lag` later (e.g. a seasonal link one period ahead).
        """
        if steps < 1:
            raise ParameterException(f"A temporal complex needs at least one step, got {steps}")
        if not lags or any(lag < 1 for lag in lags):
            raise ParameterException(f"Temporal lags must be positive integers, got {list(lags)}")

        distinct = sorted(set(lags))
        label = f"P{steps}" if distinct == [1] else f"P{steps}lag" + "-".join(str(lag) for lag in distinct)
        edges = [(t, t + lag) for lag in distinct for t in range(steps) if t + lag < steps]
        vertices = [(t,) for t in range(steps)]
        return ComplexService.build_simplicial_complex([*vertices, *edges], label=label)

    @staticmethod
    def boundary_operator(complex_: SimplicialComplex, k: int) -> SparseOperator:
        """
        B_k: rows indexed by (k-1)-simplices, columns by k-simplices. The column of (v_0, ..., v_k) carries (-1)^m in
        the row of the face omitting v_m. B_0 is the empty operator.
        """
        if k < 0:
            raise ParameterException(f"Boundary operators are defined for k >= 0, got {k}")

        rows = IndexSpace(complex_.label, (k - 1,), complex_.count(k - 1))
        cols = IndexSpace(complex_.label, (k,), complex_.count(k))
        if k == 0 or cols.size == 0:
            return SparseOperator.zero(rows, cols)

        face_index = complex_.index(k - 1)
        row_ids: list[int] = []
        col_ids: list[int] = []
        data: list[int] = []
        for col, simplex in enumerate(complex_.simplices(k)):
            for m in range(k + 1):
                row_ids.append(face_index[simplex[:m] + simplex[m + 1 :]])
                col_ids.append(col)
                data.append(-1 if m % 2 else 1)

        matrix = sp.csr_array(
            (np.array(data, dtype=np.int64), (np.array(row_ids), np.array(col_ids))),
            shape=(rows.size, cols.size),
        )
        return SparseOperator(rows, cols, matrix)

    @staticmethod
    def build_cell_complex(cells: Iterable[CellSpec], label: str | None = None) -> AbstractCellComplex:
        """
        Build an abstract cell complex from cell specs, listed in any order. Within a dimension, cells keep the order
        in which they were given. Raises `MalformedComplexException` if a boundary entry points at a missing cell or
        at a cell of the wrong dimension, or if the resulting boundary does not square to zero.
        """
        by_dim: list[list[CellId]] = []
        dims: dict[CellId, int] = {}
        boundary: dict[CellId, tuple[BoundaryEntry, ...]] = {}
        for spec in cells:
            if spec.dim < 0:
                raise MalformedComplexException(f"Cell {spec.id!r} has negative dimension {spec.dim}")
            if spec.id in dims:
                raise MalformedComplexException(f"Cell id {spec.id!r} appears more than once")
            while len(by_dim) <= spec.dim:
                by_dim.append([])
            by_dim[spec.dim].append(spec.id)
            dims[spec.id] = spec.dim
            boundary[spec.id] = tuple((face, int(sign)) for face, sign in spec.boundary)

        for cell_id, entries in boundary.items():
            dim = dims[cell_id]
            if dim == 0 and entries:
                raise MalformedComplexException(f"0-cell {cell_id!r} cannot have a boundary")
            for face, sign in entries:
                if sign == 0:
                    raise MalformedComplexException(f"Cell {cell_id!r} lists face {face!r} with coefficient 0")
                if face not in dims:
                    raise MalformedComplexException(f"Cell {cell_id!r} references unknown face {face!r}")
                if dims[face] != dim - 1:
                    raise MalformedComplexException(
                        f"Cell {cell_id!r} of dimension {dim} references {face!r} of dimension {dims[face]}"
                    )

        complex_ = ComplexService._make_cell_complex([tuple(ids) for ids in by_dim], boundary, label)
        for k in range(1, complex_.dimension):
            product = ComplexService.cc_boundary_operator(complex_, k) @ ComplexService.cc_boundary_operator(
                complex_, k + 1
            )
            if product.nnz:
                raise MalformedComplexException(
                    f"Boundary does not square to zero between dimensions {k + 1} and {k - 1}"
                )
        return complex_

    @staticmethod
    def cc_boundary_operator(complex_: AbstractCellComplex, k: int) -> SparseOperator:
        """B_k of an abstract cell complex, assembled from its stored boundary entries."""
        if k < 0:
            raise ParameterException(f"Boundary operators are defined for k >= 0, got {k}")

        rows = IndexSpace(complex_.label, (k - 1,), complex_.count(k - 1))
        cols = IndexSpace(complex_.label, (k,), complex_.count(k))
        if k == 0 or cols.size == 0:
            return SparseOperator.zero(rows, cols)

        face_index = complex_.index(k - 1)
        row_ids: list[int] = []
        col_ids: list[int] = []
        data: list[int] = []
        for col, cell in enumerate(complex_.cells(k)):
            for face, sign in complex_.boundary_entries[cell]:
                row_ids.append(face_index[face])
                col_ids.append(col)
                data.append(sign)

        matrix = sp.csr_array(
            (np.array(data, dtype=np.int64), (np.array(row_ids, dtype=int), np.array(col_ids, dtype=int))),
            shape=(rows.size, cols.size),
        )
        return SparseOperator(rows, cols, matrix)

    @staticmethod
    def sc_to_cc(complex_: SimplicialComplex) -> AbstractCellComplex:
        """View a simplicial complex as an abstract cell complex; cell ids are the simplex tuples themselves."""
        boundary: dict[CellId, tuple[BoundaryEntry, ...]] = {}
        for k, simplices in enumerate(complex_.simplices_by_dim):
            for simplex in simplices:
                if k == 0:
                    boundary[simplex] = ()
                    continue
                boundary[simplex] = tuple(
                    (simplex[:m] + simplex[m + 1 :], -1 if m % 2 else 1) for m in range(k + 1)
                )
        return ComplexService._make_cell_complex(list(complex_.simplices_by_dim), boundary, complex_.label)

    @staticmethod
    def as_cell_complex(complex_: Complex) -> AbstractCellComplex:
        if isinstance(complex_, SimplicialComplex):
            return ComplexService.sc_to_cc(complex_)
        return complex_

    @staticmethod
    def boundary(complex_: Complex, k: int) -> SparseOperator:
        """B_k of either kind of complex."""
        if isinstance(complex_, SimplicialComplex):
            return ComplexService.boundary_operator(complex_, k)
        return ComplexService.cc_boundary_operator(complex_, k)

    @staticmethod
    def _make_cell_complex(
        cells_by_dim: list[tuple[CellId, ...]],
        boundary: dict[CellId, tuple[BoundaryEntry, ...]],
        label: str | None,
    ) -> AbstractCellComplex:
        cells = tuple(tuple(ids) for ids in cells_by_dim)
        entries = MappingProxyType(dict(boundary))
        if label is None:
            return AbstractCellComplex(cells_by_dim=cells, boundary_entries=entries)
        return AbstractCellComplex(cells_by_dim=cells, boundary_entries=entries, label=label)
