from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import ParameterException, SignalShapeException
from core.services.complex_service import (
    AbstractCellComplex,
    BoundaryEntry,
    CellId,
    Complex,
    ComplexService,
)
from core.services.operators import IndexSpace, SparseOperator, assemble_blocks, kron, sparse_identity
from core.services.spectral_service import SpectralService

logger = logging.getLogger(__name__)

BiGrade = tuple[int, int]


@dataclass(frozen=True)
class BigradedSignal:
    """
    A signal on the (i, j) grade of a product complex, i.e. on C^i(X) (x) C^j(Y). `values` is the N_i(X) x N_j(Y)
    array flattened row-major: X index outer, Y index inner.
    """

    grade: BiGrade
    shape: tuple[int, int]
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float).reshape(-1)
        if values.shape[0] != self.shape[0] * self.shape[1]:
            raise SignalShapeException(
                f"Signal of length {values.shape[0]} does not fit grade {self.grade} of shape {self.shape}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


class ProductComplex:
    """
    Cartesian product Z = X x Y of two cell complexes. The k-cells of Z are the pairs (sigma_X, sigma_Y) of an i-cell
    and a j-cell with i + j = k. Cells are only enumerated for the grades a caller asks for, and each grade is built
    once even under concurrent readers.
    """

    def __init__(self, factor_x: AbstractCellComplex, factor_y: AbstractCellComplex, label: str | None = None):
        self.factor_x = factor_x
        self.factor_y = factor_y
        self.label = label or f"{factor_x.label}x{factor_y.label}"
        self._cells: dict[BiGrade, tuple[tuple[CellId, CellId], ...]] = {}
        self._cell_complex: AbstractCellComplex | None = None
        self._lock = threading.Lock()

    @property
    def dimension(self) -> int:
        return self.factor_x.dimension + self.factor_y.dimension

    def count(self, i: int, j: int) -> int:
        return self.factor_x.count(i) * self.factor_y.count(j)

    def grades(self, k: int) -> list[BiGrade]:
        """Grades (i, j) with i + j = k present in Z, i ascending. This is the block order of C^k(Z)."""
        if k < 0:
            return []
        low = max(0, k - self.factor_y.dimension)
        high = min(k, self.factor_x.dimension)
        return [(i, k - i) for i in range(low, high + 1)]

    def index_space(self, i: int, j: int) -> IndexSpace:
        return IndexSpace(self.label, (i, j), self.count(i, j) if i >= 0 and j >= 0 else 0)

    def cells(self, i: int, j: int) -> tuple[tuple[CellId, CellId], ...]:
        """(i, j)-cells in row-major order (X cell outer, Y cell inner)."""
        with self._lock:
            if (i, j) not in self._cells:
                self._cells[(i, j)] = tuple(
                    (cell_x, cell_y) for cell_x in self.factor_x.cells(i) for cell_y in self.factor_y.cells(j)
                )
                logger.debug(f"[ProductComplex] Materialized {len(self._cells[(i, j)])} cells of grade ({i}, {j})")
            return self._cells[(i, j)]

    def cell_boundary(self, cell: tuple[CellId, CellId], i: int) -> tuple[BoundaryEntry, ...]:
        """
        Boundary of the product cell (sigma_X, sigma_Y) with sigma_X an i-cell: the faces of sigma_X paired with
        sigma_Y, then sigma_X paired with the faces of sigma_Y carrying the extra sign (-1)^i.
        """
        cell_x, cell_y = cell
        sign = -1 if i % 2 else 1
        spatial = tuple(((face, cell_y), coefficient) for face, coefficient in self.factor_x.boundary_entries[cell_x])
        temporal = tuple(
            ((cell_x, face), sign * coefficient) for face, coefficient in self.factor_y.boundary_entries[cell_y]
        )
        return spatial + temporal

    def to_cell_complex(self) -> AbstractCellComplex:
        """
        Materialize all of Z as an abstract cell complex. k-cells are listed grade by grade (i ascending), row-major
        inside each grade, matching the block order of `ProductService.full_boundary`.
        """
        if self._cell_complex is not None:
            return self._cell_complex

        cells_by_dim: list[tuple[CellId, ...]] = []
        boundary: dict[CellId, tuple[BoundaryEntry, ...]] = {}
        for k in range(self.dimension + 1):
            layer: list[CellId] = []
            for i, j in self.grades(k):
                for cell in self.cells(i, j):
                    layer.append(cell)
                    boundary[cell] = self.cell_boundary(cell, i)
            cells_by_dim.append(tuple(layer))

        complex_ = ComplexService._make_cell_complex(cells_by_dim, boundary, self.label)
        with self._lock:
            if self._cell_complex is None:
                self._cell_complex = complex_
            return self._cell_complex


class ProductService:
    """
    Product complexes, their signed boundary maps, and the product Hodge Laplacian.
    """

    @staticmethod
    def product_complex(factor_x: Complex, factor_y: Complex, label: str | None = None) -> ProductComplex:
        return ProductComplex(
            ComplexService.as_cell_complex(factor_x), ComplexService.as_cell_complex(factor_y), label=label
        )

    @staticmethod
    def product_boundary(product: ProductComplex, i: int, j: int) -> tuple[SparseOperator, SparseOperator]:
        """
        The two blocks of the boundary of grade (i, j): B_i(X) (x) I into grade (i - 1, j), and
        (-1)^i I (x) B_j(Y) into grade (i, j - 1). Grades outside the complex give empty operators.
        """
        cols = product.index_space(i, j)
        to_spatial = product.index_space(i - 1, j)
        to_temporal = product.index_space(i, j - 1)
        if i < 0 or j < 0:
            return SparseOperator.zero(to_spatial, cols), SparseOperator.zero(to_temporal, cols)

        boundary_x = ComplexService.cc_boundary_operator(product.factor_x, i).matrix
        boundary_y = ComplexService.cc_boundary_operator(product.factor_y, j).matrix
        spatial = kron(boundary_x, sparse_identity(product.factor_y.count(j)))
        temporal = kron(sparse_identity(product.factor_x.count(i)), boundary_y)
        if i % 2:
            temporal = -temporal
        return SparseOperator(to_spatial, cols, spatial), SparseOperator(to_temporal, cols, temporal)

    @staticmethod
    def full_boundary(product: ProductComplex, k: int) -> SparseOperator:
        """
        The boundary of Z from k-cells to (k-1)-cells, stacked from the per-grade blocks in the order given by
        `ProductComplex.grades`.
        """
        row_grades = product.grades(k - 1)
        col_grades = product.grades(k)
        row_position = {grade: n for n, grade in enumerate(row_grades)}
        blocks = {}
        for n, (i, j) in enumerate(col_grades):
            spatial, temporal = ProductService.product_boundary(product, i, j)
            if (i - 1, j) in row_position:
                blocks[(row_position[(i - 1, j)], n)] = spatial.matrix
            if (i, j - 1) in row_position:
                blocks[(row_position[(i, j - 1)], n)] = temporal.matrix

        row_sizes = [product.count(*grade) for grade in row_grades]
        col_sizes = [product.count(*grade) for grade in col_grades]
        matrix = assemble_blocks(row_sizes, col_sizes, blocks)
        rows = IndexSpace(product.label, (k - 1,), sum(row_sizes))
        cols = IndexSpace(product.label, (k,), sum(col_sizes))
        return SparseOperator(rows, cols, matrix)

    @staticmethod
    def product_hodge_laplacian(
        product: ProductComplex, i: int, j: int, alpha_x: float = 1, alpha_y: float = 1
    ) -> SparseOperator:
        """
        alpha_x * (L_X^i (x) I) + alpha_y * (I (x) L_Y^j) on grade (i, j). With unit weights this equals the Laplacian
        assembled from the boundary of Z (see `assembled_hodge_laplacian`).
        """
        if alpha_x < 0 or alpha_y < 0:
            raise ParameterException(f"Laplacian weights must be non-negative, got ({alpha_x}, {alpha_y})")
        if i < 0 or j < 0:
            raise ParameterException(f"Invalid product grade ({i}, {j})")

        laplacian_x = SpectralService.hodge_laplacian(product.factor_x, i).matrix
        laplacian_y = SpectralService.hodge_laplacian(product.factor_y, j).matrix
        spatial = kron(laplacian_x, sparse_identity(product.factor_y.count(j)))
        temporal = kron(sparse_identity(product.factor_x.count(i)), laplacian_y)
        space = product.index_space(i, j)
        return SparseOperator(space, space, spatial * alpha_x + temporal * alpha_y)

    @staticmethod
    def assembled_hodge_laplacian(product: ProductComplex, i: int, j: int) -> SparseOperator:
        """
        The (i, j) diagonal block of B_k^T B_k + B_{k+1} B_{k+1}^T computed from the boundary of Z itself, k = i + j.
        """
        k = i + j
        down = ProductService.full_boundary(product, k)
        up = ProductService.full_boundary(product, k + 1)
        laplacian = (down.T @ down + up @ up.T).matrix

        space = product.index_space(i, j)
        grades = product.grades(k)
        if (i, j) not in grades:
            return SparseOperator.zero(space, space)
        offset = sum(product.count(*grade) for grade in grades[: grades.index((i, j))])
        block = laplacian[offset : offset + space.size, offset : offset + space.size]
        return SparseOperator(space, space, block)

    @staticmethod
    def signal(product: ProductComplex, i: int, j: int, values: np.ndarray) -> BigradedSignal:
        return BigradedSignal(
            grade=(i, j), shape=(product.factor_x.count(i), product.factor_y.count(j)), values=values
        )

    @staticmethod
    def signal_reshape(signal: BigradedSignal) -> np.ndarray:
        """Matrix view N_i(X) x N_j(Y) of a bigraded signal; factor operators act on the left (X) or right (Y)."""
        return np.array(signal.values).reshape(signal.shape)

    @staticmethod
    def signal_flatten(matrix: np.ndarray, grade: BiGrade) -> BigradedSignal:
        """Inverse of `signal_reshape`."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise SignalShapeException(f"Expected a matrix view, got an array of shape {matrix.shape}")
        return BigradedSignal(grade=grade, shape=(matrix.shape[0], matrix.shape[1]), values=matrix.reshape(-1))
