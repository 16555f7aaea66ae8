from core.management.base import ProdtopCommand, RunConfig, add_run_options
from core.serializers import ProductSerializer
from core.services.io_service import IOService
from core.services.operators import SparseOperator
from core.services.product_service import ProductComplex, ProductService


class Command(ProdtopCommand):
    help = "Assemble an operator on one grade of the product of two complexes and write it as Matrix Market."
    serializer_class = ProductSerializer

    def add_arguments(self, parser):
        parser.add_argument("--x", required=True, help="JSON document of the first factor X.")
        parser.add_argument("--y", required=True, help="JSON document of the second factor Y.")
        parser.add_argument("--grade", required=True, help="Product grade 'i,j'.")
        parser.add_argument(
            "--operator",
            choices=["laplacian", "assembled-laplacian", "boundary-spatial", "boundary-temporal"],
            help=(
                "laplacian: alpha_x L_X (x) I + alpha_y I (x) L_Y (default); assembled-laplacian: the grade block of "
                "the Laplacian built from the boundary of the product; boundary-spatial / boundary-temporal: the two "
                "blocks of the product boundary."
            ),
        )
        parser.add_argument("--alpha-x", type=float, help="Weight of the X Laplacian (default 1).")
        parser.add_argument("--alpha-y", type=float, help="Weight of the Y Laplacian (default 1).")
        parser.add_argument("--emit", help="Matrix Market output path.")
        add_run_options(parser)

    def _product(self, config: RunConfig) -> ProductComplex:
        factor_x = IOService.load_single_complex(config.inputs["x"])
        factor_y = IOService.load_single_complex(config.inputs["y"])
        return ProductService.product_complex(factor_x, factor_y)

    def check_inputs(self, config: RunConfig) -> None:
        self._product(config)

    def run(self, config: RunConfig) -> None:
        product = self._product(config)
        i, j = config.params["grade"]
        kind = config.params["operator"]

        operator: SparseOperator
        if kind == "laplacian":
            operator = ProductService.product_hodge_laplacian(
                product, i, j, alpha_x=config.params["alpha_x"], alpha_y=config.params["alpha_y"]
            )
        elif kind == "assembled-laplacian":
            operator = ProductService.assembled_hodge_laplacian(product, i, j)
        else:
            spatial, temporal = ProductService.product_boundary(product, i, j)
            operator = spatial if kind == "boundary-spatial" else temporal

        if config.outputs["emit"]:
            IOService.write_matrix_market(config.outputs["emit"], operator, config.header_lines())
        self.stdout.write(f"{operator.rows} x {operator.cols} nnz={operator.nnz}")
