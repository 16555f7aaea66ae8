import pandas as pd

from core.management.base import ProdtopCommand, RunConfig, add_run_options
from core.serializers import DemoSerializer
from core.services.interpolation_service import InterpolationService
from core.services.io_service import IOService


class Command(ProdtopCommand):
    help = (
        "Run a bundled experiment. fig1: interpolation on the reconstructed 10-edge, 3-step scene with 5 observations "
        "under joint, pure spatial and pure temporal smoothing."
    )
    serializer_class = DemoSerializer

    def add_arguments(self, parser):
        parser.add_argument("experiment", choices=["fig1"], help="Experiment to run.")
        parser.add_argument("--out", help="Also write the table as CSV here.")
        add_run_options(parser)

    def check_inputs(self, config: RunConfig) -> None:
        InterpolationService.demo_scene()

    def run(self, config: RunConfig) -> None:
        rows = InterpolationService.run_demo()

        self.stdout.write("alpha_t,alpha_s,rel_error")
        for row in rows:
            self.stdout.write(f"{row.alpha_t:g},{row.alpha_s:g},{row.rel_error:.3f}")

        if config.outputs["out"]:
            frame = pd.DataFrame(rows, columns=["alpha_t", "alpha_s", "rel_error"])
            IOService.write_csv(config.outputs["out"], frame, config.header_lines())
