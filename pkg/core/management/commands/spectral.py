import pandas as pd

from core.exceptions import ParameterException
from core.management.base import ProdtopCommand, RunConfig, add_run_options
from core.serializers import SpectralSerializer
from core.services.complex_service import Complex, ComplexService
from core.services.io_service import IOService
from core.services.product_service import ProductComplex, ProductService
from core.services.spectral_service import SpectralService


class Command(ProdtopCommand):
    help = (
        "Smallest eigenmodes of a product grade, each split into its spatial and temporal eigenvalue. A single complex "
        "is treated as its product with a point, so grade k gives the modes of L_k."
    )
    serializer_class = SpectralSerializer

    def add_arguments(self, parser):
        parser.add_argument("--complex", required=True, help="JSON document of a complex or of a product.")
        parser.add_argument("--grade", required=True, help="Grade 'k' or 'i,j'.")
        parser.add_argument("--modes", type=int, help="Number of modes (default: all).")
        parser.add_argument("--alpha-x", type=float, help="Weight of the X Laplacian (default 1).")
        parser.add_argument("--alpha-y", type=float, help="Weight of the Y Laplacian (default 1).")
        parser.add_argument(
            "--hodge", action="store_true", help="Also print gradient/curl/harmonic dimensions (single complex only)."
        )
        parser.add_argument("--out", help="CSV output path (default: stdout).")
        add_run_options(parser)

    def _load(self, config: RunConfig) -> tuple[ProductComplex, Complex | None]:
        loaded = IOService.load_complex(config.inputs["complex"])
        if isinstance(loaded, ProductComplex):
            return loaded, None
        point = ComplexService.build_simplicial_complex([(0,)], label="pt")
        return ProductService.product_complex(loaded, point), loaded

    def check_inputs(self, config: RunConfig) -> None:
        self._load(config)

    def run(self, config: RunConfig) -> None:
        product, single = self._load(config)
        i, j = config.params["grade"]
        size = product.count(i, j)
        if size == 0:
            raise ParameterException(f"Grade ({i}, {j}) of {product.label} has no cells")
        modes = config.params["modes"]
        if modes is not None and modes > size:
            raise ParameterException(f"Asked for {modes} modes of a {size}-dimensional grade")

        eigenmodes = SpectralService.product_eigenmodes(
            product, i, j, count=modes, alpha_x=config.params["alpha_x"], alpha_y=config.params["alpha_y"]
        )
        frame = pd.DataFrame(
            [
                (index, mode.lambda_x, mode.lambda_y, mode.eigenvalue)
                for index, mode in enumerate(eigenmodes)
            ],
            columns=["index", "lambda_x", "lambda_y", "lambda_sum"],
        )

        if config.params["hodge"]:
            if single is None:
                raise ParameterException("Hodge dimensions are only reported for a single complex")
            gradient, curl, harmonic = SpectralService.hodge_decompose(single, i).dimensions
            self.stdout.write("gradient,curl,harmonic")
            self.stdout.write(f"{gradient},{curl},{harmonic}")

        if config.outputs["out"]:
            IOService.write_csv(config.outputs["out"], frame, config.header_lines())
        else:
            self.stdout.write(frame.to_csv(index=False, lineterminator="\n"), ending="")
