from core.management.base import ProdtopCommand, RunConfig, add_run_options
from core.serializers import InterpolateSerializer
from core.services.complex_service import ComplexService, SimplicialComplex
from core.services.interpolation_service import FlowObservation, InterpolationParams, InterpolationService
from core.services.io_service import IOService


class Command(ProdtopCommand):
    help = "Interpolate a partially observed edge flow jointly over space and time."
    serializer_class = InterpolateSerializer

    def add_arguments(self, parser):
        parser.add_argument("--complex", required=True, help="JSON document of the spatial simplicial complex.")
        parser.add_argument("--obs", required=True, help="Observations CSV (t,edge_u,edge_v,value; t 0-based).")
        parser.add_argument("--alpha-s", type=float, required=True, help="Spatial smoothness weight.")
        parser.add_argument("--alpha-t", type=float, required=True, help="Temporal smoothness weight.")
        parser.add_argument("--lambda", dest="lam", type=float, required=True, help="Ridge weight, > 0.")
        parser.add_argument("--steps", type=int, help="Number of time steps (default: last observed t + 1).")
        parser.add_argument(
            "--temporal-lag",
            type=int,
            action="append",
            help="Link every step to the step LAG later; repeatable (default: 1, the path graph).",
        )
        parser.add_argument("--truth", help="Ground-truth flow CSV; prints the relative recovery error.")
        parser.add_argument("--out", required=True, help="Flow CSV output path.")
        add_run_options(parser)

    def _load(self, config: RunConfig) -> tuple[SimplicialComplex, FlowObservation, SimplicialComplex]:
        complex_ = IOService.load_simplicial_complex(config.inputs["complex"])
        observation = IOService.read_observations(config.inputs["obs"], complex_, config.params["steps"])
        lags = config.params["temporal_lag"] or (1,)
        return complex_, observation, ComplexService.temporal_complex(observation.steps, lags)

    def check_inputs(self, config: RunConfig) -> None:
        complex_, observation, _ = self._load(config)
        if config.inputs["truth"]:
            IOService.read_flow(config.inputs["truth"], complex_, observation.steps)

    def run(self, config: RunConfig) -> None:
        complex_, observation, time_complex = self._load(config)
        params = InterpolationParams(
            alpha_s=config.params["alpha_s"], alpha_t=config.params["alpha_t"], lam=config.params["lam"]
        )
        flow = InterpolationService.interpolate_flow(complex_, observation, params, time_complex)
        IOService.write_flow(config.outputs["out"], flow, config.header_lines())

        objective = InterpolationService.objective(complex_, observation, flow, params, time_complex)
        self.stdout.write(f"objective,{objective:.12g}")
        if config.inputs["truth"]:
            truth = IOService.read_flow(config.inputs["truth"], complex_, observation.steps)
            self.stdout.write(f"rel_error,{InterpolationService.relative_error(flow, truth):.12g}")
