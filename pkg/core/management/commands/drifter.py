import logging

import pandas as pd

from core.management.base import ProdtopCommand, RunConfig, add_run_options
from core.serializers import DrifterRunSerializer, DrifterSynthSerializer
from core.services.complex_service import ComplexService
from core.services.drifter_service import (
    HYPERPARAMETER_GRID,
    SYNTH_BBOX,
    SYNTH_HEX_SIZE,
    DrifterService,
    SweepResult,
    Trajectory,
)
from core.services.hex_grid_service import BBox, HexGridComplex, HexGridService
from core.services.io_service import IOService

logger = logging.getLogger(__name__)

RESULT_COLUMNS = ["alpha_s", "alpha_t", "train_loss", "test_loss", "iters"]
COMPONENT_COLUMNS = ["year", "edge_u", "edge_v", "gradient", "curl", "harmonic"]


class Command(ProdtopCommand):
    help = "Ocean-current inference from drifter trajectories on a hexagonal grid over the ocean."
    serializer_classes = {"run": DrifterRunSerializer, "synth": DrifterSynthSerializer}

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest="action", required=True)

        run = actions.add_parser(
            "run", help="Hyperparameter sweep: infer currents on a training split, score on the held-out buoys."
        )
        run.add_argument("--pings", required=True, help="Drifter CSV with columns id,timestamp,lat,lon.")
        run.add_argument("--bbox", required=True, help="Bounding box 'north,west,south,east' in degrees.")
        run.add_argument("--hex-size", type=float, help="Hexagon size in degrees (default 0.3).")
        run.add_argument("--mask", help="Text file of land hexagon ids, one per line.")
        run.add_argument("--split", type=float, help="Fraction of buoys used for training (default 0.8).")
        run.add_argument("--alpha-s", help="Comma-separated spatial weights (default: 0 and 1e-5 .. 1).")
        run.add_argument("--alpha-t", help="Comma-separated temporal weights (default: 0 and 1e-5 .. 1).")
        run.add_argument(
            "--temporal-lag", type=int, action="append", help="Link every year to the year LAG later; repeatable."
        )
        run.add_argument("--max-iter", type=int, help="Iteration cap of the sphere solver.")
        run.add_argument("--components", help="Also write the Hodge components of the best setting's currents here.")
        run.add_argument("--out", required=True, help="Results CSV output path.")
        add_run_options(run)

        synth = actions.add_parser("synth", help="Generate the desk-scale synthetic drifter benchmark.")
        synth.add_argument("--count", type=int, help="Number of drifters (default 60).")
        synth.add_argument("--years", type=int, help="Number of years (default 5).")
        synth.add_argument("--days", type=int, help="Maximum days per trajectory (default 90).")
        synth.add_argument("--start-year", type=int, help="First year (default 2000).")
        synth.add_argument("--out", required=True, help="Pings CSV output path.")
        add_run_options(synth)

    def _load(self, config: RunConfig) -> tuple[HexGridComplex, list[Trajectory]]:
        bbox = BBox.parse(config.params["bbox"])
        land = IOService.read_mask(config.inputs["mask"]) if config.inputs["mask"] else set()
        grid = HexGridService.build_hex_grid(bbox, config.params["hex_size"], land)
        return grid, DrifterService.ingest_gdp_csv(config.inputs["pings"], bbox=bbox)

    def check_inputs(self, config: RunConfig) -> None:
        if config.subcommand.endswith("run"):
            self._load(config)

    def run(self, config: RunConfig) -> None:
        if config.subcommand.endswith("synth"):
            self._synthesize(config)
        else:
            self._sweep(config)

    def _synthesize(self, config: RunConfig) -> None:
        trajectories = DrifterService.synthesize_trajectories(
            count=config.params["count"],
            years=config.params["years"],
            days=config.params["days"],
            start_year=config.params["start_year"],
            seed=config.seed,
        )
        IOService.write_pings(config.outputs["out"], trajectories, config.header_lines())
        self.stdout.write(f"{len(trajectories)} trajectories")
        self.stdout.write(f"--bbox {SYNTH_BBOX} --hex-size {SYNTH_HEX_SIZE:g}")

    def _sweep(self, config: RunConfig) -> None:
        grid, trajectories = self._load(config)
        train, test = DrifterService.split_train_test(trajectories, config.params["split"], seed=config.seed)
        lags = config.params["temporal_lag"] or (1,)
        logger.info(
            f"{self.log_prefix} {grid.complex_.count(1)} edges, {len(train)} training and {len(test)} test buoys"
        )

        results = DrifterService.run_sweep(
            grid,
            train,
            test,
            alpha_s_values=config.params["alpha_s"] or HYPERPARAMETER_GRID,
            alpha_t_values=config.params["alpha_t"] or HYPERPARAMETER_GRID,
            lags=lags,
            max_iter=config.params["max_iter"],
        )
        IOService.write_csv(config.outputs["out"], pd.DataFrame(results, columns=RESULT_COLUMNS), config.header_lines())

        self.stdout.write("setting,alpha_s,alpha_t,train_loss,test_loss")
        for row in DrifterService.summarize(results):
            best = row.result
            self.stdout.write(
                f"{row.setting},{best.alpha_s:g},{best.alpha_t:g},{best.train_loss:.3f},{best.test_loss:.3f}"
            )

        if config.outputs["components"]:
            best = min(results, key=lambda result: (result.test_loss, result.alpha_s, result.alpha_t))
            self._write_components(config, grid, train, best, lags)

    def _write_components(
        self,
        config: RunConfig,
        grid: HexGridComplex,
        train: list[Trajectory],
        best: SweepResult,
        lags: list[int] | tuple[int, ...],
    ) -> None:
        fhat_train = DrifterService.yearly_flows(grid, train)
        inference = DrifterService.infer_currents(
            grid,
            fhat_train,
            best.alpha_s,
            best.alpha_t,
            max_iter=config.params["max_iter"],
            time_complex=ComplexService.temporal_complex(len(fhat_train.years), lags),
        )
        edges = grid.complex_.simplices(1)
        rows = [
            (year, u, v, parts.gradient[e], parts.curl[e], parts.harmonic[e])
            for year, parts in DrifterService.current_components(grid, inference.flows).items()
            for e, (u, v) in enumerate(edges)
        ]
        IOService.write_csv(
            config.outputs["components"], pd.DataFrame(rows, columns=COMPONENT_COLUMNS), config.header_lines()
        )
        self.stdout.write(f"components of alpha_s={best.alpha_s:g}, alpha_t={best.alpha_t:g}")
