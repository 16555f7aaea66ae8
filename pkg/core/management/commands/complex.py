from core.management.base import ProdtopCommand, RunConfig, add_run_options
from core.serializers import ComplexBoundarySerializer, ComplexBuildSerializer
from core.services.complex_service import ComplexService
from core.services.io_service import IOService


class Command(ProdtopCommand):
    help = "Build a simplicial or cell complex from a JSON document, or export one of its boundary operators."
    serializer_classes = {"build": ComplexBuildSerializer, "boundary": ComplexBoundarySerializer}

    def add_arguments(self, parser):
        actions = parser.add_subparsers(dest="action", required=True)

        build = actions.add_parser("build", help="Validate a complex, print its cell counts, optionally re-emit it.")
        build.add_argument("--input", required=True, help="JSON complex document.")
        build.add_argument("--out", help="Write the normalized JSON document here.")
        build.add_argument("--summary", action="store_true", help="Print the number of cells per dimension.")
        add_run_options(build)

        boundary = actions.add_parser("boundary", help="Write the boundary operator B_k as Matrix Market.")
        boundary.add_argument("--input", required=True, help="JSON complex document.")
        boundary.add_argument("--dim", type=int, required=True, help="Dimension k of B_k.")
        boundary.add_argument("--out", required=True, help="Matrix Market output path.")
        add_run_options(boundary)

    def check_inputs(self, config: RunConfig) -> None:
        IOService.load_single_complex(config.inputs["input"])

    def run(self, config: RunConfig) -> None:
        complex_ = IOService.load_single_complex(config.inputs["input"])

        if config.subcommand.endswith("boundary"):
            operator = ComplexService.boundary(complex_, config.params["dim"])
            IOService.write_matrix_market(config.outputs["out"], operator, config.header_lines())
            self.stdout.write(f"{operator.rows} x {operator.cols} nnz={operator.nnz}")
            return

        if config.outputs["out"]:
            IOService.write_json(config.outputs["out"], IOService.complex_to_document(complex_))
        if config.params["summary"] or not config.outputs["out"]:
            self.stdout.write("dim,count")
            for k in range(complex_.dimension + 1):
                self.stdout.write(f"{k},{complex_.count(k)}")
