from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from django.conf import settings
from scipy.sparse.linalg import cg

from core.exceptions import ParameterException, SignalShapeException, SolverConvergenceException
from core.services.complex_service import ComplexService, SimplicialComplex
from core.services.product_service import ProductService

logger = logging.getLogger(__name__)

Edge = tuple[int, ...]


@dataclass(frozen=True)
class FlowObservation:
    """
    Partially observed spatiotemporal edge flow: the set of observed (t, edge index) pairs with their values. Values
    are signed relative to the edge's ascending reference orientation.
    """

    steps: int
    edge_count: int
    entries: tuple[tuple[int, int, float], ...]

    def __post_init__(self) -> None:
        entries = tuple((int(t), int(e), float(value)) for t, e, value in self.entries)
        seen: set[tuple[int, int]] = set()
        for t, e, _ in entries:
            if not (0 <= t < self.steps and 0 <= e < self.edge_count):
                raise SignalShapeException(
                    f"Observation (t={t}, edge={e}) is outside {self.steps} steps x {self.edge_count} edges"
                )
            if (t, e) in seen:
                raise ParameterException(f"Edge {e} is observed twice at t={t}")
            seen.add((t, e))
        object.__setattr__(self, "entries", tuple(sorted(entries)))

    @property
    def size(self) -> int:
        return len(self.entries)

    def flat_positions(self) -> np.ndarray:
        """Positions of the observed entries in the flattened (edge outer, time inner) vector."""
        return np.array([e * self.steps + t for t, e, _ in self.entries], dtype=int)

    def flat_values(self) -> np.ndarray:
        return np.array([value for _, _, value in self.entries], dtype=float)

    def mask(self) -> np.ndarray:
        """Boolean T x |E| array, True on the observed entries."""
        mask = np.zeros((self.steps, self.edge_count), dtype=bool)
        for t, e, _ in self.entries:
            mask[t, e] = True
        return mask

    def dense(self) -> np.ndarray:
        """T x |E| array holding the observed values and zeros elsewhere."""
        values = np.zeros((self.steps, self.edge_count))
        for t, e, value in self.entries:
            values[t, e] = value
        return values


@dataclass(frozen=True)
class SpatiotemporalFlow:
    """
    Edge flow over time, `values[t, e]` = flow on edge e at step t. As a vector it is the grade-(1, 0) signal of
    X x P_T, flattened with the edge index outer and the time index inner.
    """

    values: np.ndarray = field(repr=False)
    edges: tuple[Edge, ...] = ()

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise SignalShapeException(f"A spatiotemporal flow is a T x |E| array, got shape {values.shape}")
        if self.edges and values.shape[1] != len(self.edges):
            raise SignalShapeException(f"Flow has {values.shape[1]} edge columns but {len(self.edges)} edges")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def edge_count(self) -> int:
        return self.values.shape[1]

    @property
    def flat(self) -> np.ndarray:
        return self.values.T.reshape(-1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, steps: int, edges: Sequence[Edge]) -> SpatiotemporalFlow:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (steps * len(edges),):
            raise SignalShapeException(f"Vector of shape {flat.shape} is not {steps} steps x {len(edges)} edges")
        return cls(values=flat.reshape(len(edges), steps).T, edges=tuple(edges))


@dataclass(frozen=True)
class InterpolationParams:
    alpha_s: float
    alpha_t: float
    lam: float

    def __post_init__(self) -> None:
        if self.alpha_s < 0 or self.alpha_t < 0:
            raise ParameterException(
                f"Smoothness weights must be non-negative, got alpha_s={self.alpha_s}, alpha_t={self.alpha_t}"
            )
        if self.lam <= 0:
            raise ParameterException(f"lambda must be strictly positive, got {self.lam}")


class SweepRow(NamedTuple):
    alpha_t: float
    alpha_s: float
    rel_error: float


@dataclass(frozen=True)
class DemoScene:
    complex_: SimplicialComplex
    observation: FlowObservation
    truth: SpatiotemporalFlow
    lam: float


# Joint, pure spatial and pure temporal, as (alpha_t, alpha_s).
DEMO_SETTINGS: tuple[tuple[float, float], ...] = ((0.01, 1.0), (0.0, 1.0), (1.0, 0.0))

_DEMO_SIMPLICES = ((0, 1), (0, 3), (1, 2), (1, 7), (2, 3), (2, 4), (3, 5), (4, 5, 6))

# A harmonic flow (divergence- and curl-free) on the scene complex, in edge order.
_DEMO_TRUTH = (3.0, -3.0, 3.0, 0.0, 0.0, 3.0, -3.0, 2.0, 1.0, -1.0)

# (t, edge, value): two edges at the first step, one at the second, two at the third.
_DEMO_OBSERVED = ((0, (0, 1)), (0, (3, 5)), (1, (2, 4)), (2, (1, 2)), (2, (4, 5)))


class InterpolationService:
    """
    Joint space/time interpolation of partially observed edge flows: minimize

        MSE(f|_Omega, fhat|_Omega) + alpha_s * sum_t f_t' L_s f_t + alpha_t * sum_e f^e' L_t f^e + lambda * |f|^2

    with L_s the edge Hodge Laplacian of the spatial complex and L_t the graph Laplacian of the time complex.
    """

    @staticmethod
    def _time_complex(steps: int, time_complex: SimplicialComplex | None) -> SimplicialComplex:
        if time_complex is None:
            return ComplexService.temporal_complex(steps)
        if time_complex.count(0) != steps:
            raise SignalShapeException(
                f"Time complex has {time_complex.count(0)} steps, the flow has {steps}"
            )
        return time_complex

    @staticmethod
    def regularizer(
        complex_: SimplicialComplex,
        steps: int,
        alpha_s: float,
        alpha_t: float,
        time_complex: SimplicialComplex | None = None,
    ) -> sp.csr_array:
        """alpha_s (L_s (x) I) + alpha_t (I (x) L_t): the grade-(1, 0) Laplacian of X x P_T."""
        product = ProductService.product_complex(complex_, InterpolationService._time_complex(steps, time_complex))
        return ProductService.product_hodge_laplacian(product, 1, 0, alpha_x=alpha_s, alpha_y=alpha_t).matrix

    @staticmethod
    def interpolate_flow(
        complex_: SimplicialComplex,
        observation: FlowObservation,
        params: InterpolationParams,
        time_complex: SimplicialComplex | None = None,
    ) -> SpatiotemporalFlow:
        """
        Solve (M/|Omega| + alpha_s L_s (x) I + alpha_t I (x) L_t + lambda I) f = m/|Omega|, M the diagonal observation
        mask and m the masked observations. The system is SPD because lambda > 0.
        """
        edges = complex_.simplices(1)
        if not edges:
            raise SignalShapeException("Interpolation needs a complex with at least one edge")
        if observation.edge_count != len(edges):
            raise SignalShapeException(
                f"Observation covers {observation.edge_count} edges, the complex has {len(edges)}"
            )

        steps = observation.steps
        size = steps * len(edges)
        system = InterpolationService.regularizer(
            complex_, steps, params.alpha_s, params.alpha_t, time_complex
        ) + params.lam * sp.eye_array(size, format="csr")
        rhs = np.zeros(size)

        if observation.size == 0:
            logger.warning(
                "[InterpolationService] No observed entries; the problem is under-determined and the solution is 0"
            )
            return SpatiotemporalFlow.from_flat(rhs, steps, edges)

        positions = observation.flat_positions()
        weights = np.zeros(size)
        weights[positions] = 1.0 / observation.size
        rhs[positions] = observation.flat_values() / observation.size
        system = sp.csr_array(system + sp.diags_array(weights, format="csr"))

        solution = InterpolationService._solve_spd(system, rhs)
        logger.debug(
            f"[InterpolationService] Solved {size}-dimensional system with alpha_s={params.alpha_s}, "
            f"alpha_t={params.alpha_t}, lambda={params.lam}"
        )
        return SpatiotemporalFlow.from_flat(solution, steps, edges)

    @staticmethod
    def _solve_spd(system: sp.csr_array, rhs: np.ndarray) -> np.ndarray:
        size = system.shape[0]
        if size < settings.PRODTOP_DENSE_SOLVE_LIMIT:
            return scipy.linalg.solve(system.toarray(), rhs, assume_a="pos")

        solution, info = cg(system, rhs, rtol=settings.PRODTOP_CG_RTOL, maxiter=10 * size)
        if info != 0:
            residual = np.linalg.norm(system @ solution - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny)
            raise SolverConvergenceException(
                f"Conjugate gradient stopped after {10 * size} iterations with relative residual {residual:.3e}"
            )
        return np.asarray(solution)

    @staticmethod
    def mse(estimate: np.ndarray, reference: np.ndarray, mask: np.ndarray) -> float:
        """Mean of the squared differences over the masked entries."""
        estimate, reference, mask = np.asarray(estimate), np.asarray(reference), np.asarray(mask, dtype=bool)
        if estimate.shape != reference.shape or estimate.shape != mask.shape:
            raise SignalShapeException(
                f"Cannot compare flows of shapes {estimate.shape} and {reference.shape} under mask {mask.shape}"
            )
        count = int(mask.sum())
        if count == 0:
            logger.warning("[InterpolationService] MSE over an empty mask is defined as 0")
            return 0.0
        difference = (estimate - reference)[mask]
        return float(difference @ difference / count)

    @staticmethod
    def relative_error(estimate: SpatiotemporalFlow, truth: SpatiotemporalFlow) -> float:
        if estimate.values.shape != truth.values.shape:
            raise SignalShapeException(
                f"Cannot compare flows of shapes {estimate.values.shape} and {truth.values.shape}"
            )
        norm = np.linalg.norm(truth.values)
        if norm == 0:
            raise ParameterException("Relative error against an all-zero ground truth is undefined")
        return float(np.linalg.norm(estimate.values - truth.values) / norm)

    @staticmethod
    def product_space_quadratic_form(
        complex_: SimplicialComplex,
        time_complex: SimplicialComplex,
        flow: SpatiotemporalFlow,
        alpha_s: float,
        alpha_t: float,
    ) -> float:
        """f' (alpha_s L_s (x) I + alpha_t I (x) L_t) f for a flow on the edges of X over the vertices of Y."""
        if flow.edge_count != complex_.count(1):
            raise SignalShapeException(f"Flow has {flow.edge_count} edges, the complex has {complex_.count(1)}")
        regularizer = InterpolationService.regularizer(complex_, flow.steps, alpha_s, alpha_t, time_complex)
        flat = flow.flat
        return float(flat @ (regularizer @ flat))

    @staticmethod
    def objective(
        complex_: SimplicialComplex,
        observation: FlowObservation,
        flow: SpatiotemporalFlow,
        params: InterpolationParams,
        time_complex: SimplicialComplex | None = None,
    ) -> float:
        time_complex = InterpolationService._time_complex(flow.steps, time_complex)
        data = InterpolationService.mse(flow.values, observation.dense(), observation.mask())
        smoothness = InterpolationService.product_space_quadratic_form(
            complex_, time_complex, flow, params.alpha_s, params.alpha_t
        )
        return data + smoothness + params.lam * float(flow.flat @ flow.flat)

    @staticmethod
    def objective_gradient(
        complex_: SimplicialComplex,
        observation: FlowObservation,
        flow: SpatiotemporalFlow,
        params: InterpolationParams,
        time_complex: SimplicialComplex | None = None,
    ) -> SpatiotemporalFlow:
        """Gradient of `objective` with respect to the flow, as a flow of the same shape."""
        flat = flow.flat
        regularizer = InterpolationService.regularizer(
            complex_, flow.steps, params.alpha_s, params.alpha_t, time_complex
        )
        gradient = 2 * (regularizer @ flat) + 2 * params.lam * flat
        if observation.size:
            positions = observation.flat_positions()
            gradient[positions] += 2 * (flat[positions] - observation.flat_values()) / observation.size
        return SpatiotemporalFlow.from_flat(gradient, flow.steps, complex_.simplices(1))

    @staticmethod
    def sweep(
        complex_: SimplicialComplex,
        observation: FlowObservation,
        truth: SpatiotemporalFlow,
        grid: Iterable[tuple[float, float]],
        lam: float,
        time_complex: SimplicialComplex | None = None,
    ) -> list[SweepRow]:
        """
        Relative recovery error for every (alpha_t, alpha_s) in `grid`, rows in grid order. Grid points are solved
        concurrently on up to PRODTOP_THREADS workers.
        """
        points = [(float(alpha_t), float(alpha_s)) for alpha_t, alpha_s in grid]
        params = [InterpolationParams(alpha_s=alpha_s, alpha_t=alpha_t, lam=lam) for alpha_t, alpha_s in points]

        def evaluate(point: InterpolationParams) -> float:
            estimate = InterpolationService.interpolate_flow(complex_, observation, point, time_complex)
            return InterpolationService.relative_error(estimate, truth)

        with ThreadPoolExecutor(max_workers=max(1, settings.PRODTOP_THREADS)) as executor:
            errors = list(executor.map(evaluate, params))
        return [SweepRow(alpha_t, alpha_s, error) for (alpha_t, alpha_s), error in zip(points, errors, strict=True)]

    @staticmethod
    def demo_scene(steps: int = 3) -> DemoScene:
        """
        Reconstructed demo scene: a complex with 8 vertices, 10 edges and one filled triangle whose edge space has a
        2-dimensional harmonic part, a harmonic flow held constant over `steps` steps, and 5 observed entries.
        """
        complex_ = ComplexService.build_simplicial_complex(_DEMO_SIMPLICES, label="demo")
        edges = complex_.simplices(1)
        truth = SpatiotemporalFlow(values=np.tile(_DEMO_TRUTH, (steps, 1)), edges=edges)
        index = complex_.index(1)
        observation = FlowObservation(
            steps=steps,
            edge_count=len(edges),
            entries=tuple(
                (t, index[edge], truth.values[t, index[edge]]) for t, edge in _DEMO_OBSERVED if t < steps
            ),
        )
        return DemoScene(complex_=complex_, observation=observation, truth=truth, lam=1e-6)

    @staticmethod
    def run_demo(
        settings_grid: Sequence[tuple[float, float]] = DEMO_SETTINGS,
    ) -> list[SweepRow]:
        scene = InterpolationService.demo_scene()
        return InterpolationService.sweep(
            scene.complex_, scene.observation, scene.truth, settings_grid, lam=scene.lam
        )
