from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, NamedTuple

import numpy as np
import scipy.linalg
from django.conf import settings
from scipy.sparse.linalg import eigsh

from core.exceptions import ContractViolationException, ParameterException, SignalShapeException
from core.services.complex_service import Complex, ComplexService
from core.services.operators import Grade, SparseOperator

if TYPE_CHECKING:
    from core.services.product_service import ProductComplex

logger = logging.getLogger(__name__)


class Eigenmode(NamedTuple):
    eigenvalue: float
    vector: np.ndarray


class ProductEigenmode(NamedTuple):
    lambda_x: float
    lambda_y: float
    eigenvalue: float
    vector: np.ndarray


class HodgeComponents(NamedTuple):
    gradient: np.ndarray
    curl: np.ndarray
    harmonic: np.ndarray


@dataclass(frozen=True)
class HodgeDecomposition:
    """
    Orthonormal bases of the three mutually orthogonal pieces of the k-signal space: Im(B_k^T) (gradient),
    Im(B_{k+1}) (curl) and ker(L_k) (harmonic).
    """

    grade: Grade
    basis_gradient: np.ndarray
    basis_curl: np.ndarray
    basis_harmonic: np.ndarray
    tolerance: float

    @property
    def dimensions(self) -> tuple[int, int, int]:
        return (self.basis_gradient.shape[1], self.basis_curl.shape[1], self.basis_harmonic.shape[1])

    @property
    def harmonic_dimension(self) -> int:
        return self.basis_harmonic.shape[1]

    def projector(self, part: str) -> np.ndarray:
        basis = {"gradient": self.basis_gradient, "curl": self.basis_curl, "harmonic": self.basis_harmonic}[part]
        return basis @ basis.T

    def split(self, signal: np.ndarray) -> HodgeComponents:
        signal = np.asarray(signal, dtype=float)
        if signal.shape != (self.basis_gradient.shape[0],):
            raise SignalShapeException(
                f"Signal of shape {signal.shape} does not live on {self.basis_gradient.shape[0]} cells"
            )
        return HodgeComponents(
            gradient=self.basis_gradient @ (self.basis_gradient.T @ signal),
            curl=self.basis_curl @ (self.basis_curl.T @ signal),
            harmonic=self.basis_harmonic @ (self.basis_harmonic.T @ signal),
        )


def _range_basis(matrix: np.ndarray, tol: float) -> np.ndarray:
    if matrix.size == 0 or not np.any(matrix):
        return np.zeros((matrix.shape[0], 0))
    return scipy.linalg.orth(matrix.astype(float), rcond=tol)


def _kernel_basis(matrix: np.ndarray, tol: float) -> np.ndarray:
    size = matrix.shape[0]
    if size == 0:
        return np.zeros((0, 0))
    if not np.any(matrix):
        return np.eye(size)
    return scipy.linalg.null_space(matrix.astype(float), rcond=tol)


def _fix_sign(vector: np.ndarray) -> np.ndarray:
    # Largest-magnitude entry positive, so repeated runs emit identical vectors.
    pivot = int(np.argmax(np.abs(vector)))
    return -vector if vector[pivot] < 0 else vector


class SpectralService:
    """
    Hodge Laplacians, Hodge decompositions and eigenmodes, for single complexes and for product grades.
    """

    @staticmethod
    def hodge_laplacian(complex_: Complex, k: int) -> SparseOperator:
        """L_k = B_k^T B_k + B_{k+1} B_{k+1}^T. L_0 is the graph Laplacian."""
        if k < 0:
            raise ParameterException(f"Hodge Laplacians are defined for k >= 0, got {k}")
        down = ComplexService.boundary(complex_, k)
        up = ComplexService.boundary(complex_, k + 1)
        return down.T @ down + up @ up.T

    @staticmethod
    def hodge_decompose(complex_: Complex, k: int, tol: float | None = None) -> HodgeDecomposition:
        tol = settings.PRODTOP_RANK_TOL if tol is None else tol
        if tol <= 0:
            raise ParameterException(f"Rank tolerance must be positive, got {tol}")

        down = ComplexService.boundary(complex_, k).to_dense()
        up = ComplexService.boundary(complex_, k + 1).to_dense()
        laplacian = SpectralService.hodge_laplacian(complex_, k).to_dense()
        decomposition = HodgeDecomposition(
            grade=(k,),
            basis_gradient=_range_basis(down.T, tol),
            basis_curl=_range_basis(up, tol),
            basis_harmonic=_kernel_basis(laplacian, tol),
            tolerance=tol,
        )

        dims = decomposition.dimensions
        if sum(dims) != complex_.count(k):
            logger.warning(
                f"[SpectralService] Hodge dimensions {dims} do not add up to {complex_.count(k)}; "
                f"tolerance {tol} may be too loose or too tight"
            )
        return decomposition

    @staticmethod
    def eigenmodes(operator: SparseOperator, count: int | None = None) -> list[Eigenmode]:
        """
        The `count` smallest eigenpairs of a symmetric operator, ascending, with orthonormal vectors. Dense `eigh`
        below PRODTOP_DENSE_EIG_LIMIT, Lanczos (`eigsh`) above.
        """
        size = operator.shape[0]
        if operator.shape[0] != operator.shape[1]:
            raise ContractViolationException(f"Eigenmodes need a square operator, got shape {operator.shape}")
        scale = float(np.max(np.abs(operator.matrix.data))) if operator.nnz else 0.0
        if not operator.is_symmetric(atol=1e-12 * max(1.0, scale)):
            raise ContractViolationException("Eigenmodes need a symmetric operator")

        count = size if count is None else count
        if count < 0 or count > size:
            raise ParameterException(f"Cannot compute {count} eigenmodes of a {size}-dimensional operator")
        if count == 0:
            return []

        if size < settings.PRODTOP_DENSE_EIG_LIMIT or count >= size - 1:
            values, vectors = scipy.linalg.eigh(operator.to_dense().astype(float), subset_by_index=[0, count - 1])
        else:
            start = np.random.default_rng(settings.PRODTOP_DEFAULT_SEED).standard_normal(size)
            values, vectors = eigsh(operator.matrix.astype(float), k=count, which="SA", v0=start)
            order = np.argsort(values, kind="stable")
            values, vectors = values[order], vectors[:, order]

        return [Eigenmode(float(values[n]), _fix_sign(vectors[:, n])) for n in range(count)]

    @staticmethod
    def product_eigenmodes(
        product: ProductComplex,
        i: int,
        j: int,
        count: int | None = None,
        alpha_x: float = 1.0,
        alpha_y: float = 1.0,
    ) -> list[ProductEigenmode]:
        """
        Eigenpairs of the grade-(i, j) product Laplacian built from factor eigenpairs: for (lambda_x, u) on X and
        (lambda_y, v) on Y, the flattened outer product u (x) v has eigenvalue alpha_x * lambda_x + alpha_y * lambda_y.
        Sorted ascending by that sum.
        """
        if i < 0 or j < 0:
            raise ParameterException(f"Invalid product grade ({i}, {j})")
        if alpha_x < 0 or alpha_y < 0:
            raise ParameterException(f"Laplacian weights must be non-negative, got ({alpha_x}, {alpha_y})")

        laplacian_x = SpectralService.hodge_laplacian(product.factor_x, i)
        laplacian_y = SpectralService.hodge_laplacian(product.factor_y, j)
        size_x, size_y = laplacian_x.shape[0], laplacian_y.shape[0]
        total = size_x * size_y
        count = total if count is None else count
        if count < 0 or count > total:
            raise ParameterException(f"Cannot compute {count} eigenmodes of a {total}-dimensional grade")

        # The `count` smallest sums only ever use the `count` smallest modes of each factor.
        modes_x = SpectralService.eigenmodes(laplacian_x, min(count, size_x))
        modes_y = SpectralService.eigenmodes(laplacian_y, min(count, size_y))
        candidates = sorted(
            (
                (alpha_x * mode_x.eigenvalue + alpha_y * mode_y.eigenvalue, a, b)
                for a, mode_x in enumerate(modes_x)
                for b, mode_y in enumerate(modes_y)
            ),
            key=lambda candidate: (candidate[0], candidate[1], candidate[2]),
        )

        return [
            ProductEigenmode(
                lambda_x=modes_x[a].eigenvalue,
                lambda_y=modes_y[b].eigenvalue,
                eigenvalue=eigenvalue,
                vector=np.kron(modes_x[a].vector, modes_y[b].vector),
            )
            for eigenvalue, a, b in candidates[:count]
        ]

    @staticmethod
    def projector_distance(basis_a: np.ndarray, basis_b: np.ndarray) -> float:
        """Spectral-norm distance between the orthogonal projectors onto two subspaces given by orthonormal bases."""
        if basis_a.shape[0] != basis_b.shape[0]:
            raise SignalShapeException("Subspaces live in spaces of different dimension")
        difference = basis_a @ basis_a.T - basis_b @ basis_b.T
        if difference.size == 0:
            return 0.0
        return float(np.linalg.norm(difference, 2))
