from datetime import UTC, datetime

import numpy as np
import pytest

from core.exceptions import IngestException, InsufficientDataException, ParameterException
from core.services.complex_service import ComplexService
from core.services.drifter_service import (
    HYPERPARAMETER_GRID,
    SYNTH_BBOX,
    DrifterService,
    Ping,
    SweepResult,
    Trajectory,
    YearlyFlows,
)

JUNE_2000 = datetime(2000, 6, 1, tzinfo=UTC)


def signed_traversals(grid, vector):
    """Nonzero entries of an edge vector keyed by edge."""
    edges = grid.complex_.simplices(1)
    return {edges[e]: int(vector[e]) for e in np.flatnonzero(vector)}


class TestTrajectory:
    def test_timestamps_must_increase(self):
        ping = Ping(JUNE_2000, 0.0, 0.0)
        with pytest.raises(ParameterException):
            Trajectory(buoy_id="x", pings=(ping, ping))

    def test_yearly_flows_flatten_like_spatiotemporal_flows(self):
        flows = YearlyFlows(flows=[[1.0, 2.0], [3.0, 4.0]], years=(2000, 2001))
        np.testing.assert_array_equal(flows.flat, [1.0, 3.0, 2.0, 4.0])
        assert YearlyFlows.from_flat(flows.flat, flows.years).years == (2000, 2001)
        assert flows.year_index[2001] == 1


class TestDiscretizeTrajectory:
    def test_hops_count_with_the_edge_orientation(self, unit_grid, make_trajectory):
        forward = DrifterService.discretize_trajectory(unit_grid, make_trajectory("f", [0, 4], JUNE_2000))
        backward = DrifterService.discretize_trajectory(unit_grid, make_trajectory("b", [4, 0], JUNE_2000))
        assert signed_traversals(unit_grid, forward[2000]) == {(0, 4): 1}
        assert signed_traversals(unit_grid, backward[2000]) == {(0, 4): -1}

    def test_non_adjacent_hops_are_bridged(self, unit_grid, make_trajectory):
        flows = DrifterService.discretize_trajectory(unit_grid, make_trajectory("x", [0, 8], JUNE_2000))
        assert signed_traversals(unit_grid, flows[2000]) == {(0, 4): 1, (4, 8): 1}

    def test_repeated_pings_in_one_hexagon_count_once(self, unit_grid, make_trajectory):
        flows = DrifterService.discretize_trajectory(unit_grid, make_trajectory("x", [0, 0, 0, 1, 1, 2], JUNE_2000))
        assert signed_traversals(unit_grid, flows[2000]) == {(0, 1): 1, (1, 2): 1}

    def test_hop_belongs_to_the_year_of_its_earlier_ping(self, unit_grid):
        cell_0, cell_4 = unit_grid.cell_by_id[0], unit_grid.cell_by_id[4]
        crossing = Trajectory(
            buoy_id="x",
            pings=(
                Ping(datetime(2000, 12, 31, 18, tzinfo=UTC), cell_0.lat, cell_0.lon),
                Ping(datetime(2001, 1, 1, 6, tzinfo=UTC), cell_4.lat, cell_4.lon),
            ),
        )
        lingering = Trajectory(
            buoy_id="y",
            pings=(
                Ping(datetime(2000, 6, 1, tzinfo=UTC), cell_0.lat, cell_0.lon),
                Ping(datetime(2001, 2, 1, tzinfo=UTC), cell_0.lat, cell_0.lon),
                Ping(datetime(2001, 3, 1, tzinfo=UTC), cell_4.lat, cell_4.lon),
            ),
        )
        assert list(DrifterService.discretize_trajectory(unit_grid, crossing)) == [2000]
        assert list(DrifterService.discretize_trajectory(unit_grid, lingering)) == [2001]

    def test_pings_outside_the_grid_are_dropped(self, unit_grid, make_trajectory):
        trajectory = make_trajectory("x", [0, 1], JUNE_2000)
        stray = Ping(datetime(2000, 6, 3, tzinfo=UTC), 5.0, 5.0)
        flows = DrifterService.discretize_trajectory(unit_grid, Trajectory("x", (*trajectory.pings, stray)))
        assert signed_traversals(unit_grid, flows[2000]) == {(0, 1): 1}

    def test_hops_are_bridged_across_pings_outside_the_grid(self, unit_grid):
        cell_0 = unit_grid.cell_by_id[0]
        cell_8 = unit_grid.cell_by_id[8]
        trajectory = Trajectory(
            "x",
            (
                Ping(JUNE_2000, cell_0.lat, cell_0.lon),
                Ping(datetime(2000, 6, 2, tzinfo=UTC), 5.0, 5.0),
                Ping(datetime(2000, 6, 3, tzinfo=UTC), cell_8.lat, cell_8.lon),
            ),
        )
        flows = DrifterService.discretize_trajectory(unit_grid, trajectory)
        assert signed_traversals(unit_grid, flows[2000]) == {(0, 4): 1, (4, 8): 1}

    def test_closed_loop_has_no_divergence(self, unit_grid, make_trajectory):
        ring = [unit_grid.neighbors(5)[0]]
        while len(ring) < 6:
            candidates = [n for n in unit_grid.neighbors(5) if n not in ring]
            ring.append(next(n for n in candidates if unit_grid.are_adjacent(ring[-1], n)))
        flows = DrifterService.discretize_trajectory(unit_grid, make_trajectory("loop", [*ring, ring[0]], JUNE_2000))

        assert np.count_nonzero(flows[2000]) == 6
        boundary = ComplexService.boundary_operator(unit_grid.complex_, 1)
        np.testing.assert_array_equal(boundary @ flows[2000], 0)


class TestYearlyFlows:
    def test_years_are_contiguous(self, unit_grid, make_trajectory):
        early = make_trajectory("a", [0, 1], JUNE_2000)
        late = make_trajectory("b", [4, 5], datetime(2002, 6, 1, tzinfo=UTC))
        flows = DrifterService.yearly_flows(unit_grid, [early, late])
        assert flows.years == (2000, 2001, 2002)
        assert not flows.flows[1].any()
        assert flows.flows.sum() == 2

    def test_explicit_years_drop_other_traversals(self, unit_grid, make_trajectory):
        flows = DrifterService.yearly_flows(unit_grid, [make_trajectory("a", [0, 1], JUNE_2000)], years=[2005])
        assert flows.years == (2005,)
        assert not flows.flows.any()

    def test_no_traversal_at_all(self, unit_grid, make_trajectory):
        with pytest.raises(InsufficientDataException):
            DrifterService.yearly_flows(unit_grid, [make_trajectory("a", [0, 0], JUNE_2000)])


class TestCosineLoss:
    def test_bounds(self):
        reference = np.array([1.0, 0.0, -2.0])
        assert DrifterService.cosine_loss(reference, reference) == pytest.approx(0.0)
        assert DrifterService.cosine_loss(-reference, reference) == pytest.approx(1.0)
        assert DrifterService.cosine_loss(np.array([0.0, 1.0, 0.0]), reference) == 0.5

    def test_only_the_reference_support_counts(self):
        reference = np.array([1.0, 0.0, 0.0])
        assert DrifterService.cosine_loss(np.array([2.0, 7.0, -3.0]), reference) == pytest.approx(0.0)

    def test_zero_reference(self):
        with pytest.raises(ParameterException):
            DrifterService.cosine_loss(np.ones(3), np.zeros(3))

    def test_stays_in_the_unit_interval(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            flows = rng.standard_normal(8)
            reference = rng.standard_normal(8) * (rng.random(8) < 0.5)
            reference[rng.integers(8)] = rng.choice([-1.0, 1.0]) * (1.0 + rng.random())
            assert 0.0 <= DrifterService.cosine_loss(flows, reference) <= 1.0


class TestInferCurrents:
    @pytest.fixture
    def fhat_train(self, unit_grid, unit_grid_trajectories):
        return DrifterService.yearly_flows(unit_grid, unit_grid_trajectories)

    def test_objective_is_scale_invariant(self, unit_grid, fhat_train):
        laplacian = DrifterService.weighted_laplacian(unit_grid, 2, 1.0, 1.0)
        scaled = YearlyFlows(flows=3 * fhat_train.flows, years=fhat_train.years)
        assert DrifterService.objective(scaled, fhat_train, laplacian) == pytest.approx(
            DrifterService.objective(fhat_train, fhat_train, laplacian)
        )

    def test_without_smoothing_the_training_flow_is_optimal(self, unit_grid, fhat_train):
        inference = DrifterService.infer_currents(unit_grid, fhat_train, 0.0, 0.0)
        assert inference.converged
        assert inference.iterations == 0
        assert inference.objective == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(inference.flows.flat, fhat_train.flat / np.linalg.norm(fhat_train.flat))

    def test_smoothing_lowers_the_objective_on_the_sphere(self, unit_grid, fhat_train):
        laplacian = DrifterService.weighted_laplacian(unit_grid, 2, 1.0, 1.0)
        start = DrifterService.objective(fhat_train, fhat_train, laplacian)

        inference = DrifterService.infer_currents(unit_grid, fhat_train, 1.0, 1.0, max_iter=2000)

        assert np.linalg.norm(inference.flows.flat) == pytest.approx(1.0)
        assert inference.objective < start
        assert inference.objective == pytest.approx(DrifterService.objective(inference.flows, fhat_train, laplacian))

    def test_iteration_cap_is_reported(self, unit_grid, fhat_train, caplog):
        inference = DrifterService.infer_currents(unit_grid, fhat_train, 1.0, 1.0, max_iter=1)
        assert inference.iterations <= 1
        if not inference.converged:
            assert "iteration cap" in caplog.text

    def test_rejects_bad_input(self, unit_grid, fhat_train):
        with pytest.raises(ParameterException):
            DrifterService.infer_currents(unit_grid, fhat_train, -1.0, 0.0)
        zero = YearlyFlows(flows=np.zeros_like(fhat_train.flows), years=fhat_train.years)
        with pytest.raises(ParameterException):
            DrifterService.infer_currents(unit_grid, zero, 1.0, 1.0)

    @pytest.mark.parametrize(("alpha_s", "alpha_t"), [(1.0, 1.0), (1e-2, 1.0), (1e-4, 0.0), (0.0, 1e-3)])
    def test_training_loss_is_bounded_by_the_starting_smoothness(self, unit_grid, fhat_train, alpha_s, alpha_t):
        """Descent starts at zero training loss and never raises the objective."""
        laplacian = DrifterService.weighted_laplacian(unit_grid, 2, alpha_s, alpha_t)
        start = fhat_train.flat / np.linalg.norm(fhat_train.flat)
        start_penalty = float(start @ (laplacian @ start))

        inference = DrifterService.infer_currents(unit_grid, fhat_train, alpha_s, alpha_t)
        train_loss = DrifterService.cosine_loss(inference.flows, fhat_train)

        assert train_loss <= start_penalty + 1e-9
        if start_penalty <= 1e-3:
            assert train_loss <= 1e-3


class TestSplitTrainTest:
    def test_split_by_buoy(self, unit_grid_trajectories):
        train, test = DrifterService.split_train_test(unit_grid_trajectories, 0.5, seed=3)
        assert len(train) == 3 and len(test) == 3
        assert not {t.buoy_id for t in train} & {t.buoy_id for t in test}
        assert DrifterService.split_train_test(unit_grid_trajectories, 0.5, seed=3) == (train, test)

    def test_both_sides_keep_a_buoy(self, unit_grid_trajectories):
        train, test = DrifterService.split_train_test(unit_grid_trajectories, 0.99)
        assert len(train) == 5 and len(test) == 1

    def test_rejects_bad_input(self, unit_grid_trajectories):
        with pytest.raises(ParameterException):
            DrifterService.split_train_test(unit_grid_trajectories, 1.0)
        with pytest.raises(InsufficientDataException):
            DrifterService.split_train_test(unit_grid_trajectories[:1], 0.5)


class TestIngest:
    def test_mixed_timestamps_and_bad_rows(self, tmp_path, caplog):
        path = tmp_path / "pings.csv"
        path.write_text(
            "# exported buoys\n"
            "id,timestamp,lat,lon\n"
            "b2,2001-03-01T00:00:00+00:00,0.5,0.5\n"
            "b1,978307200,0.1,0.1\n"
            "b1,2001-01-01T06:00:00Z,0.2,0.2\n"
            "b1,2001-01-01T06:00:00Z,0.3,0.3\n"
            "b1,not-a-time,0.2,0.2\n"
            "b2,1985-01-01T00:00:00Z,0.5,0.5\n"
            "b2,2001-03-02T00:00:00Z,9.0,9.0\n"
        )

        trajectories = DrifterService.ingest_gdp_csv(path, bbox=SYNTH_BBOX)

        assert [t.buoy_id for t in trajectories] == ["b1", "b2"]
        b1, b2 = trajectories
        assert [ping.timestamp for ping in b1.pings] == [
            datetime(2001, 1, 1, tzinfo=UTC),
            datetime(2001, 1, 1, 6, tzinfo=UTC),
        ]
        assert b1.pings[1].lat == 0.2
        assert len(b2.pings) == 1
        assert "Skipped 1 unparseable rows" in caplog.text

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "pings.csv"
        path.write_text("buoy,time,lat,lon\nb1,0,0,0\n")
        with pytest.raises(IngestException):
            DrifterService.ingest_gdp_csv(path)


class TestSweep:
    def test_rows_and_summary(self, unit_grid, unit_grid_trajectories):
        train, test = unit_grid_trajectories[:4], unit_grid_trajectories[4:]
        results = DrifterService.run_sweep(
            unit_grid, train, test, alpha_s_values=(0.0, 1.0), alpha_t_values=(0.0, 1.0), max_iter=500
        )

        assert [(row.alpha_s, row.alpha_t) for row in results] == [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        assert results[0].train_loss == pytest.approx(0.0, abs=1e-12)
        for row in results:
            assert 0.0 <= row.train_loss <= 1.0
            assert 0.0 <= row.test_loss <= 1.0

        summary = DrifterService.summarize(results)
        assert [row.setting for row in summary] == ["none", "temporal", "spatial", "joint"]

    def test_summary_picks_the_lowest_test_loss_per_regime(self):
        results = [
            SweepResult(0.0, 0.0, 0.0, 0.4, 0),
            SweepResult(0.1, 0.0, 0.0, 0.3, 5),
            SweepResult(1.0, 0.0, 0.0, 0.2, 5),
            SweepResult(1.0, 1.0, 0.0, 0.1, 5),
        ]
        summary = {row.setting: row.result for row in DrifterService.summarize(results)}
        assert set(summary) == {"none", "spatial", "joint"}
        assert summary["spatial"].alpha_s == 1.0

    def test_default_grid(self):
        assert HYPERPARAMETER_GRID == pytest.approx((0.0, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0))


class TestComponents:
    def test_components_add_up_to_the_flow(self, unit_grid, unit_grid_trajectories):
        flows = DrifterService.yearly_flows(unit_grid, unit_grid_trajectories)
        components = DrifterService.current_components(unit_grid, flows)
        assert list(components) == [2000, 2001]
        for year, parts in components.items():
            np.testing.assert_allclose(
                parts.gradient + parts.curl + parts.harmonic, flows.flows[flows.year_index[year]], atol=1e-9
            )
            # The unmasked grid is a disk: no harmonic part.
            np.testing.assert_allclose(parts.harmonic, 0, atol=1e-9)


class TestSynthesize:
    def test_seeded_and_inside_the_box(self):
        first = DrifterService.synthesize_trajectories(count=8, years=2, days=20, seed=11)
        second = DrifterService.synthesize_trajectories(count=8, years=2, days=20, seed=11)
        assert first == second
        assert first
        for trajectory in first:
            assert trajectory.buoy_id.startswith("synth-")
            assert all(SYNTH_BBOX.contains(ping.lat, ping.lon) for ping in trajectory.pings)
            assert all(2000 <= ping.timestamp.year <= 2001 for ping in trajectory.pings)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ParameterException):
            DrifterService.synthesize_trajectories(count=0)
