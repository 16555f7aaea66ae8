from __future__ import annotations

from dataclasses import dataclass
from typing import Any, overload

import numpy as np
import scipy.sparse as sp

from core.exceptions import OperatorMismatchException, SignalShapeException

Grade = tuple[int, ...]


@dataclass(frozen=True)
class IndexSpace:
    """
    Tag describing which cells index one axis of an operator: the complex they belong to, their (bi)grade, and how
    many of them there are. A grade is `(k,)` for a plain complex and `(i, j)` for a product grade.
    """

    complex_label: str
    grade: Grade
    size: int

    def __str__(self) -> str:
        grade = ",".join(str(g) for g in self.grade)
        return f"{self.complex_label}[{grade}]({self.size})"


class SparseOperator:
    """
    Immutable sparse real matrix whose rows and columns carry `IndexSpace` tags. Composition and addition check the
    tags, so a boundary matrix can never be multiplied against the wrong dimension by accident.

    Boundary matrices and unit-weight Laplacians are stored with an integer dtype, which keeps the nilpotency and
    decomposition identities exact.
    """

    __slots__ = ("_matrix", "cols", "rows")

    def __init__(self, rows: IndexSpace, cols: IndexSpace, matrix: Any) -> None:
        csr = sp.csr_array(matrix).copy()
        if csr.shape != (rows.size, cols.size):
            raise SignalShapeException(
                f"Matrix of shape {csr.shape} does not fit index spaces {rows} x {cols}"
            )
        csr.sum_duplicates()
        csr.eliminate_zeros()
        self._matrix = csr
        self.rows = rows
        self.cols = cols

    @classmethod
    def zero(cls, rows: IndexSpace, cols: IndexSpace, dtype: Any = np.int64) -> SparseOperator:
        return cls(rows, cols, sp.csr_array((rows.size, cols.size), dtype=dtype))

    @classmethod
    def identity(cls, space: IndexSpace) -> SparseOperator:
        return cls(space, space, sp.eye_array(space.size, dtype=np.int64, format="csr"))

    @property
    def matrix(self) -> sp.csr_array:
        """Read-only view of the underlying CSR matrix; callers must not mutate it."""
        return self._matrix

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows.size, self.cols.size)

    @property
    def nnz(self) -> int:
        return int(self._matrix.nnz)

    @property
    def T(self) -> SparseOperator:  # noqa: N802
        return SparseOperator(self.cols, self.rows, self._matrix.T)

    def entries(self) -> list[tuple[int, int, float]]:
        coo = self._matrix.tocoo()
        triples = sorted(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist(), strict=True))
        return [(int(r), int(c), v) for r, c, v in triples]

    def to_dense(self) -> np.ndarray:
        return self._matrix.toarray()

    def scaled(self, factor: float) -> SparseOperator:
        return SparseOperator(self.rows, self.cols, self._matrix * factor)

    def is_symmetric(self, atol: float = 0.0) -> bool:
        if self.rows != self.cols:
            return False
        difference = self._matrix - self._matrix.T
        if difference.nnz == 0:
            return True
        return bool(np.max(np.abs(difference.data)) <= atol)

    def equals(self, other: SparseOperator) -> bool:
        """Exact entrywise equality, tags included."""
        if self.rows != other.rows or self.cols != other.cols:
            return False
        return (self._matrix != other._matrix).nnz == 0

    def retagged(self, rows: IndexSpace, cols: IndexSpace) -> SparseOperator:
        return SparseOperator(rows, cols, self._matrix)

    def __add__(self, other: SparseOperator) -> SparseOperator:
        if self.rows != other.rows or self.cols != other.cols:
            raise OperatorMismatchException(
                f"Cannot add {self.rows} x {self.cols} to {other.rows} x {other.cols}"
            )
        return SparseOperator(self.rows, self.cols, self._matrix + other._matrix)

    def __sub__(self, other: SparseOperator) -> SparseOperator:
        return self + other.scaled(-1)

    @overload
    def __matmul__(self, other: SparseOperator) -> SparseOperator: ...

    @overload
    def __matmul__(self, other: np.ndarray) -> np.ndarray: ...

    def __matmul__(self, other: SparseOperator | np.ndarray) -> SparseOperator | np.ndarray:
        if isinstance(other, SparseOperator):
            if self.cols != other.rows:
                raise OperatorMismatchException(
                    f"Cannot compose {self.rows} x {self.cols} with {other.rows} x {other.cols}"
                )
            return SparseOperator(self.rows, other.cols, self._matrix @ other._matrix)

        vector = np.asarray(other)
        if vector.shape[0] != self.cols.size:
            raise SignalShapeException(f"Vector of length {vector.shape[0]} does not live on {self.cols}")
        return np.asarray(self._matrix @ vector)

    def __repr__(self) -> str:
        return f"SparseOperator({self.rows} x {self.cols}, nnz={self.nnz})"


def kron(left: sp.csr_array, right: sp.csr_array) -> sp.csr_array:
    """Kronecker product under the row-major (left outer, right inner) flattening used throughout prodtop."""
    return sp.csr_array(sp.kron(left, right, format="csr"))


def sparse_identity(size: int) -> sp.csr_array:
    return sp.eye_array(size, dtype=np.int64, format="csr")


def assemble_blocks(
    row_sizes: list[int],
    col_sizes: list[int],
    blocks: dict[tuple[int, int], sp.csr_array],
    dtype: Any = np.int64,
) -> sp.csr_array:
    """
    Stack sparse blocks into one matrix by explicit offsets. Unlike `scipy.sparse.block_array`, empty block rows or
    block columns (zero-sized grades) are allowed.
    """
    row_offsets = np.concatenate([[0], np.cumsum(row_sizes)]).astype(int)
    col_offsets = np.concatenate([[0], np.cumsum(col_sizes)]).astype(int)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for (block_row, block_col), block in blocks.items():
        coo = sp.coo_array(block)
        rows.append(coo.row + row_offsets[block_row])
        cols.append(coo.col + col_offsets[block_col])
        data.append(coo.data)

    shape = (int(row_offsets[-1]), int(col_offsets[-1]))
    if not data:
        return sp.csr_array(shape, dtype=dtype)
    return sp.csr_array(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=shape,
    )
