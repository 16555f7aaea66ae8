from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import UTC, datetime, timedelta
from pathlib import Path
from types import MappingProxyType
from typing import NamedTuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from django.conf import settings

from core.exceptions import (
    IngestException,
    InsufficientDataException,
    ParameterException,
    SignalShapeException,
    SolverDivergenceException,
)
from core.services.complex_service import ComplexService, SimplicialComplex
from core.services.hex_grid_service import BBox, HexGridComplex
from core.services.interpolation_service import InterpolationService
from core.services.spectral_service import HodgeComponents, SpectralService

logger = logging.getLogger(__name__)

GDP_COLUMNS = ["id", "timestamp", "lat", "lon"]

# {0} and the powers 10^0 .. 10^-5.
HYPERPARAMETER_GRID: tuple[float, ...] = (0.0, *(10.0**exponent for exponent in range(-5, 1)))

# Desk-scale synthetic benchmark: roughly a hundred hexagons at 0.3 degrees.
SYNTH_BBOX = BBox(north=3.0, west=0.0, south=0.0, east=2.5)
SYNTH_HEX_SIZE = 0.3


class Ping(NamedTuple):
    timestamp: datetime
    lat: float
    lon: float


@dataclass(frozen=True)
class Trajectory:
    buoy_id: str
    pings: tuple[Ping, ...]

    def __post_init__(self) -> None:
        for earlier, later in zip(self.pings, self.pings[1:], strict=False):
            if later.timestamp <= earlier.timestamp:
                raise ParameterException(f"Pings of buoy {self.buoy_id} are not strictly increasing in time")


@dataclass(frozen=True)
class YearlyFlows:
    """
    One edge flow per year, `flows[t, e]`. Rows follow `years`, columns the edge order of the hex grid complex.
    """

    flows: np.ndarray = field(repr=False)
    years: tuple[int, ...]

    def __post_init__(self) -> None:
        flows = np.array(self.flows, dtype=float)
        if flows.ndim != 2 or flows.shape[0] != len(self.years):
            raise SignalShapeException(f"Flows of shape {flows.shape} do not match {len(self.years)} years")
        flows.setflags(write=False)
        object.__setattr__(self, "flows", flows)

    @property
    def year_index(self) -> Mapping[int, int]:
        return MappingProxyType({year: n for n, year in enumerate(self.years)})

    @property
    def flat(self) -> np.ndarray:
        """Edge outer, year inner; the same flattening as interpolated spatiotemporal flows."""
        return self.flows.T.reshape(-1)

    @classmethod
    def from_flat(cls, flat: np.ndarray, years: Sequence[int]) -> YearlyFlows:
        return cls(flows=np.asarray(flat, dtype=float).reshape(-1, len(years)).T, years=tuple(years))


@dataclass(frozen=True)
class CurrentInference:
    flows: YearlyFlows
    objective: float
    gradient_norm: float
    iterations: int
    converged: bool


class SweepResult(NamedTuple):
    alpha_s: float
    alpha_t: float
    train_loss: float
    test_loss: float
    iters: int


class SummaryRow(NamedTuple):
    setting: str
    result: SweepResult


class _DiscretizationStats(NamedTuple):
    flows: dict[int, np.ndarray]
    outside: int
    on_land: int
    unbridged: int


class DrifterService:
    """
    Ocean-current inference from drifter trajectories on a hexagonal-grid complex: trajectories become signed edge
    traversal counts per year, and currents are inferred by trading cosine alignment with the training traversals
    against smoothness under the weighted Hodge Laplacian of the grid x time product.
    """

    @staticmethod
    def _discretize(grid: HexGridComplex, trajectory: Trajectory) -> _DiscretizationStats:
        edge_index = grid.complex_.index(1)
        flows: dict[int, np.ndarray] = {}
        outside = on_land = unbridged = 0

        visits: list[tuple[int, int]] = []
        for ping in trajectory.pings:
            axial = grid.axial(ping.lat, ping.lon)
            hex_id = grid.axial_ids.get(axial) if axial is not None else None
            if hex_id is None:
                outside += 1
                continue
            if hex_id in grid.excluded:
                on_land += 1
                continue
            if visits and visits[-1][1] == hex_id:
                visits[-1] = (ping.timestamp.year, hex_id)
                continue
            visits.append((ping.timestamp.year, hex_id))

        for (year, source), (_, target) in zip(visits, visits[1:], strict=False):
            path = [source, target] if grid.are_adjacent(source, target) else grid.bridge(source, target)
            if path is None:
                unbridged += 1
                continue
            vector = flows.setdefault(year, np.zeros(grid.complex_.count(1), dtype=np.int64))
            for a, b in zip(path, path[1:], strict=False):
                if a < b:
                    vector[edge_index[(a, b)]] += 1
                else:
                    vector[edge_index[(b, a)]] -= 1

        return _DiscretizationStats(flows=flows, outside=outside, on_land=on_land, unbridged=unbridged)

    @staticmethod
    def discretize_trajectory(grid: HexGridComplex, trajectory: Trajectory) -> dict[int, np.ndarray]:
        """
        Signed edge traversal counts of one trajectory, per calendar year. Each hop between consecutive distinct
        hexagons adds +1 to the edge if it runs from the smaller to the larger hexagon id and -1 otherwise; a hop
        belongs to the year of its earlier ping, which splits trajectories spanning several years.
        Hops between non-adjacent hexagons are bridged by a shortest path on the grid.
        """
        stats = DrifterService._discretize(grid, trajectory)
        if stats.on_land:
            logger.warning(f"[DrifterService] Dropped {stats.on_land} pings of buoy {trajectory.buoy_id} on land")
        if stats.unbridged:
            logger.warning(
                f"[DrifterService] Dropped {stats.unbridged} hops of buoy {trajectory.buoy_id} between disconnected "
                f"parts of the grid"
            )
        if stats.outside:
            logger.debug(
                f"[DrifterService] Dropped {stats.outside} pings of buoy {trajectory.buoy_id} outside the grid"
            )
        return stats.flows

    @staticmethod
    def yearly_flows(
        grid: HexGridComplex,
        trajectories: Sequence[Trajectory],
        years: Sequence[int] | None = None,
    ) -> YearlyFlows:
        """
        Sum of the trajectory flows per year. Without explicit `years`, every year from the first to the last one with
        a traversal is included so that consecutive rows are consecutive years.
        """
        with ThreadPoolExecutor(max_workers=max(1, settings.PRODTOP_THREADS)) as executor:
            per_trajectory = list(executor.map(lambda t: DrifterService.discretize_trajectory(grid, t), trajectories))

        if years is None:
            seen = sorted({year for flows in per_trajectory for year in flows})
            if not seen:
                raise InsufficientDataException("No trajectory traverses an edge of the grid")
            years = list(range(seen[0], seen[-1] + 1))

        year_index = {year: n for n, year in enumerate(years)}
        total = np.zeros((len(years), grid.complex_.count(1)))
        for flows in per_trajectory:
            for year, vector in flows.items():
                if year in year_index:
                    total[year_index[year]] += vector
        return YearlyFlows(flows=total, years=tuple(years))

    @staticmethod
    def cosine_loss(flows: YearlyFlows | np.ndarray, reference: YearlyFlows | np.ndarray) -> float:
        """
        1/2 (1 - cos) between `flows` restricted to the support of `reference` and `reference`: 0 for perfect
        alignment, 1 for opposite flows.
        """
        f = flows.flat if isinstance(flows, YearlyFlows) else np.asarray(flows, dtype=float).reshape(-1)
        g = reference.flat if isinstance(reference, YearlyFlows) else np.asarray(reference, dtype=float).reshape(-1)
        if f.shape != g.shape:
            raise SignalShapeException(f"Cannot compare flows of shapes {f.shape} and {g.shape}")

        support = g != 0
        if not support.any():
            raise ParameterException("Reference flow is zero everywhere")
        restricted = f[support]
        norm = np.linalg.norm(restricted)
        if norm == 0:
            logger.warning("[DrifterService] Flow vanishes on the reference support; cosine loss defined as 0.5")
            return 0.5
        cosine = float(restricted @ g[support]) / (norm * np.linalg.norm(g[support]))
        return float(np.clip(0.5 * (1.0 - cosine), 0.0, 1.0))

    @staticmethod
    def weighted_laplacian(
        grid: HexGridComplex,
        steps: int,
        alpha_s: float,
        alpha_t: float,
        time_complex: SimplicialComplex | None = None,
    ) -> sp.csr_array:
        """Delta(alpha_s, alpha_t) = alpha_s (L_1 (x) I) / T + alpha_t (I (x) L_0) / |E| on the flattened flows."""
        edge_count = grid.complex_.count(1)
        return InterpolationService.regularizer(
            grid.complex_, steps, alpha_s / steps, alpha_t / edge_count, time_complex
        )

    @staticmethod
    def objective(
        flows: YearlyFlows,
        reference: YearlyFlows,
        laplacian: sp.csr_array,
    ) -> float:
        """Cosine loss plus the Rayleigh quotient <f, Delta f> / |f|^2. Invariant under positive rescaling of f."""
        f = flows.flat
        squared = float(f @ f)
        if squared == 0:
            raise ParameterException("The objective is undefined at the zero flow")
        return DrifterService.cosine_loss(flows, reference) + float(f @ (laplacian @ f)) / squared

    @staticmethod
    def _objective_and_gradient(
        x: np.ndarray, g: np.ndarray, support: np.ndarray, laplacian: sp.csr_array
    ) -> tuple[float, np.ndarray]:
        g_norm = np.linalg.norm(g)
        restricted = np.where(support, x, 0.0)
        r_norm = np.linalg.norm(restricted)
        squared = float(x @ x)

        if r_norm == 0:
            loss, loss_gradient = 0.5, np.zeros_like(x)
        else:
            inner = float(restricted @ g)
            cosine = inner / (r_norm * g_norm)
            loss = float(np.clip(0.5 * (1.0 - cosine), 0.0, 1.0))
            cosine_gradient = g / (r_norm * g_norm) - inner * restricted / (r_norm**3 * g_norm)
            loss_gradient = -0.5 * cosine_gradient

        applied = np.asarray(laplacian @ x)
        rayleigh = float(x @ applied) / squared
        rayleigh_gradient = 2.0 * (applied - rayleigh * x) / squared
        return loss + rayleigh, loss_gradient + rayleigh_gradient

    @staticmethod
    def infer_currents(
        grid: HexGridComplex,
        fhat_train: YearlyFlows,
        alpha_s: float,
        alpha_t: float,
        max_iter: int | None = None,
        time_complex: SimplicialComplex | None = None,
    ) -> CurrentInference:
        """
        Projected gradient descent on the unit sphere, started at the normalized training flow, with Armijo
        backtracking (step halving, constant 1e-4). Stops when the Riemannian gradient norm drops to 1e-6 or the
        objective changes by less than 1e-10 relative. Raises `SolverDivergenceException` if no step size avoids an
        increase of the objective.
        """
        if alpha_s < 0 or alpha_t < 0:
            raise ParameterException(f"Smoothness weights must be non-negative, got ({alpha_s}, {alpha_t})")
        max_iter = settings.PRODTOP_DRIFTER_MAX_ITER if max_iter is None else max_iter

        g = fhat_train.flat
        g_norm = np.linalg.norm(g)
        if g_norm == 0:
            raise ParameterException("Training flow is zero everywhere")
        support = g != 0
        laplacian = DrifterService.weighted_laplacian(grid, len(fhat_train.years), alpha_s, alpha_t, time_complex)

        x = g / g_norm
        value, gradient = DrifterService._objective_and_gradient(x, g, support, laplacian)
        step = 1.0
        converged = False
        iterations = 0
        tangent = gradient - float(x @ gradient) * x
        while iterations < max_iter:
            tangent_norm = float(np.linalg.norm(tangent))
            if tangent_norm <= 1e-6:
                converged = True
                break

            step = min(2.0 * step, 1e3)
            accepted = False
            for _ in range(64):
                candidate = x - step * tangent
                candidate /= np.linalg.norm(candidate)
                candidate_value, candidate_gradient = DrifterService._objective_and_gradient(
                    candidate, g, support, laplacian
                )
                if candidate_value <= value - 1e-4 * step * tangent_norm**2:
                    accepted = True
                    break
                step /= 2.0

            if not accepted:
                if candidate_value > value + 1e-10 * max(1.0, abs(value)):
                    raise SolverDivergenceException(
                        f"Objective rose from {value:.6e} to {candidate_value:.6e} at the smallest step after "
                        f"{iterations} iterations (gradient norm {tangent_norm:.3e})"
                    )
                logger.info(f"[DrifterService] Line search stagnated after {iterations} iterations")
                converged = True
                break

            iterations += 1
            change = abs(value - candidate_value)
            x, value = candidate, candidate_value
            tangent = candidate_gradient - float(x @ candidate_gradient) * x
            if change <= 1e-10 * max(1.0, abs(value)):
                converged = True
                break

        if not converged:
            logger.warning(
                f"[DrifterService] Descent stopped at the {max_iter} iteration cap "
                f"(alpha_s={alpha_s}, alpha_t={alpha_t})"
            )
        return CurrentInference(
            flows=YearlyFlows.from_flat(x, fhat_train.years),
            objective=value,
            gradient_norm=float(np.linalg.norm(tangent)),
            iterations=iterations,
            converged=converged,
        )

    @staticmethod
    def split_train_test(
        trajectories: Sequence[Trajectory], fraction: float, seed: int | None = None
    ) -> tuple[list[Trajectory], list[Trajectory]]:
        """Seeded split by whole buoys; the training side gets round(fraction * buoys), at least one each side."""
        if not 0 < fraction < 1:
            raise ParameterException(f"Training fraction must lie strictly between 0 and 1, got {fraction}")
        buoys = sorted({trajectory.buoy_id for trajectory in trajectories})
        if len(buoys) < 2:
            raise InsufficientDataException(f"Need at least two buoys to split, got {len(buoys)}")

        seed = settings.PRODTOP_DEFAULT_SEED if seed is None else seed
        order = np.random.default_rng(seed).permutation(len(buoys))
        train_size = min(max(round(fraction * len(buoys)), 1), len(buoys) - 1)
        train_buoys = {buoys[n] for n in order[:train_size]}
        train = [trajectory for trajectory in trajectories if trajectory.buoy_id in train_buoys]
        test = [trajectory for trajectory in trajectories if trajectory.buoy_id not in train_buoys]
        return train, test

    @staticmethod
    def ingest_gdp_csv(path: str | Path, bbox: BBox | None = None, min_year: int | None = None) -> list[Trajectory]:
        """
        Read drifter pings from a CSV with header `id,timestamp,lat,lon`. Timestamps are epoch seconds or ISO-8601.
        Unparseable rows are skipped and counted; pings before `min_year` (PRODTOP_MIN_YEAR) or outside `bbox` are
        dropped. Returns one trajectory per buoy, sorted by buoy id, pings sorted by time.
        """
        min_year = settings.PRODTOP_MIN_YEAR if min_year is None else min_year
        try:
            frame = pd.read_csv(path, dtype=str, skipinitialspace=True, comment="#")
        except pd.errors.EmptyDataError as e:
            raise IngestException(f"{path} is empty") from e
        except pd.errors.ParserError as e:
            raise IngestException(f"Could not parse {path}: {e}") from e

        columns = [str(column).strip() for column in frame.columns]
        if columns != GDP_COLUMNS:
            raise IngestException(f"Expected header {','.join(GDP_COLUMNS)}, got {','.join(columns)}")
        frame.columns = GDP_COLUMNS

        raw = frame["timestamp"].fillna("").str.strip()
        epoch = pd.to_numeric(raw, errors="coerce")
        timestamps = pd.to_datetime(epoch, unit="s", utc=True, errors="coerce")
        textual = epoch.isna() & (raw != "")
        if textual.any():
            timestamps[textual] = pd.to_datetime(raw[textual], utc=True, errors="coerce", format="ISO8601")

        pings = pd.DataFrame(
            {
                "id": frame["id"].fillna("").str.strip(),
                "timestamp": timestamps,
                "lat": pd.to_numeric(frame["lat"], errors="coerce"),
                "lon": pd.to_numeric(frame["lon"], errors="coerce"),
            }
        )
        valid = pings["timestamp"].notna() & pings["lat"].notna() & pings["lon"].notna() & (pings["id"] != "")
        if not valid.all():
            logger.warning(f"[DrifterService] Skipped {int((~valid).sum())} unparseable rows in {path}")
        pings = pings[valid]

        recent = pings["timestamp"].dt.year >= min_year
        if not recent.all():
            logger.info(f"[DrifterService] Dropped {int((~recent).sum())} pings before {min_year}")
        pings = pings[recent]

        if bbox is not None:
            inside = pings["lat"].between(bbox.south, bbox.north) & pings["lon"].between(bbox.west, bbox.east)
            if not inside.all():
                logger.info(f"[DrifterService] Dropped {int((~inside).sum())} pings outside {bbox}")
            pings = pings[inside]

        trajectories: list[Trajectory] = []
        for buoy_id, group in pings.groupby("id", sort=True):
            group = group.sort_values("timestamp", kind="stable").drop_duplicates("timestamp", keep="first")
            trajectories.append(
                Trajectory(
                    buoy_id=str(buoy_id),
                    pings=tuple(
                        Ping(timestamp.to_pydatetime(), float(lat), float(lon))
                        for timestamp, lat, lon in zip(group["timestamp"], group["lat"], group["lon"], strict=True)
                    ),
                )
            )
        logger.info(f"[DrifterService] Ingested {len(trajectories)} trajectories from {path}")
        return trajectories

    @staticmethod
    def run_sweep(
        grid: HexGridComplex,
        train: Sequence[Trajectory],
        test: Sequence[Trajectory],
        alpha_s_values: Iterable[float] = HYPERPARAMETER_GRID,
        alpha_t_values: Iterable[float] = HYPERPARAMETER_GRID,
        lags: Sequence[int] = (1,),
        max_iter: int | None = None,
    ) -> list[SweepResult]:
        """
        Infer currents from the training trajectories for every (alpha_s, alpha_t) pair and score them against the
        held-out trajectories. Rows come alpha_s outer, alpha_t inner; grid points run concurrently. `lags` selects
        the time complex over the training years.
        """
        fhat_train = DrifterService.yearly_flows(grid, train)
        time_complex = ComplexService.temporal_complex(len(fhat_train.years), lags)
        fhat_test = DrifterService.yearly_flows(grid, test, years=fhat_train.years)
        if not np.any(fhat_test.flows):
            raise InsufficientDataException("Test trajectories traverse no edge in the training years")

        points = [(float(a_s), float(a_t)) for a_s in alpha_s_values for a_t in alpha_t_values]

        def evaluate(point: tuple[float, float]) -> SweepResult:
            alpha_s, alpha_t = point
            inference = DrifterService.infer_currents(
                grid, fhat_train, alpha_s, alpha_t, max_iter=max_iter, time_complex=time_complex
            )
            return SweepResult(
                alpha_s=alpha_s,
                alpha_t=alpha_t,
                train_loss=DrifterService.cosine_loss(inference.flows, fhat_train),
                test_loss=DrifterService.cosine_loss(inference.flows, fhat_test),
                iters=inference.iterations,
            )

        with ThreadPoolExecutor(max_workers=max(1, settings.PRODTOP_THREADS)) as executor:
            return list(executor.map(evaluate, points))

    @staticmethod
    def summarize(results: Iterable[SweepResult]) -> list[SummaryRow]:
        """
        Best row (lowest test loss) of each regime: no smoothing, temporal only, spatial only, joint. Regimes without
        a row are left out.
        """
        regimes: dict[str, list[SweepResult]] = {"none": [], "temporal": [], "spatial": [], "joint": []}
        for result in results:
            if result.alpha_s == 0 and result.alpha_t == 0:
                regimes["none"].append(result)
            elif result.alpha_s == 0:
                regimes["temporal"].append(result)
            elif result.alpha_t == 0:
                regimes["spatial"].append(result)
            else:
                regimes["joint"].append(result)
        return [
            SummaryRow(setting, min(rows, key=lambda row: (row.test_loss, row.alpha_s, row.alpha_t)))
            for setting, rows in regimes.items()
            if rows
        ]

    @staticmethod
    def current_components(grid: HexGridComplex, flows: YearlyFlows) -> dict[int, HodgeComponents]:
        """Gradient, curl and harmonic parts of each year's flow on the grid complex."""
        decomposition = SpectralService.hodge_decompose(grid.complex_, 1)
        return {year: decomposition.split(flows.flows[n]) for n, year in enumerate(flows.years)}

    @staticmethod
    def synthesize_trajectories(
        bbox: BBox = SYNTH_BBOX,
        count: int = 60,
        years: int = 5,
        seed: int | None = None,
        start_year: int = 2000,
        days: int = 90,
    ) -> list[Trajectory]:
        """
        Drifters in a smooth rotating gyre centered on the box, with a uniform drift that turns slowly from year to
        year, plus noise. Pings every 6 hours; a trajectory ends when it leaves the box or after `days` days.
        """
        if count < 1 or years < 1 or days < 1:
            raise ParameterException(f"Need positive count, years and days, got ({count}, {years}, {days})")
        seed = settings.PRODTOP_DEFAULT_SEED if seed is None else seed
        rng = np.random.default_rng(seed)

        center_lat = (bbox.north + bbox.south) / 2
        center_lon = (bbox.east + bbox.west) / 2
        radius = min(bbox.north - bbox.south, bbox.east - bbox.west) / 2
        # Degrees per day: one gyre turn in about 60 days, drift a quarter of the rim speed.
        omega = 2 * math.pi / 60
        drift = 0.25 * omega * radius
        dt = 0.25
        origin = datetime(start_year, 1, 1, tzinfo=UTC)
        span = years * 365.0

        trajectories: list[Trajectory] = []
        for n in range(count):
            start = rng.uniform(0, span - days) if span > days else 0.0
            lat = rng.uniform(bbox.south, bbox.north)
            lon = rng.uniform(bbox.west, bbox.east)
            pings: list[Ping] = []
            for step in range(int(days / dt)):
                elapsed = start + step * dt
                if elapsed >= span or not bbox.contains(lat, lon):
                    break
                pings.append(Ping(origin + timedelta(days=elapsed), lat, lon))
                heading = math.pi * elapsed / span
                v_lat = omega * (lon - center_lon) + drift * math.sin(heading)
                v_lon = -omega * (lat - center_lat) + drift * math.cos(heading)
                noise = rng.normal(0.0, 0.01, size=2)
                lat += v_lat * dt + noise[0]
                lon += v_lon * dt + noise[1]
            if len(pings) > 1:
                trajectories.append(Trajectory(buoy_id=f"synth-{n:03d}", pings=tuple(pings)))

        logger.info(f"[DrifterService] Synthesized {len(trajectories)} trajectories over {years} years")
        return trajectories
