class ProdtopException(Exception):
    """
    Base class for every error raised by the prodtop services. Mirrors the shape of an API exception: a class-level
    default message plus an exit code the command line layer reports, in place of an HTTP status code.
    """

    exit_code = 1
    default_detail = "prodtop error"

    def __init__(self, detail: str | None = None) -> None:
        self.detail = detail if detail is not None else self.default_detail
        super().__init__(self.detail)


class MalformedSimplexException(ProdtopException):
    """
    A simplex is empty, repeats a vertex, or mixes vertex ids that cannot be ordered.
    """

    default_detail = "Malformed simplex"


class MalformedComplexException(ProdtopException):
    """
    A cell complex is inconsistent: a boundary entry references a missing cell or a cell of the wrong dimension, a
    cell id is duplicated, or the boundary does not square to zero.
    """

    default_detail = "Malformed cell complex"


class ComplexFormatException(ProdtopException):
    """
    An input file (JSON complex, observation CSV, Matrix Market) could not be parsed or failed validation.
    """

    default_detail = "Could not read input"


class OperatorMismatchException(ProdtopException):
    """
    Two operators were composed or added although their index spaces do not line up.
    """

    default_detail = "Operator index spaces do not match"


class SignalShapeException(ProdtopException):
    default_detail = "Signal shape does not match its index space"


class ParameterException(ProdtopException):
    default_detail = "Invalid parameter"


class ContractViolationException(ProdtopException):
    """
    An operator handed to a routine does not satisfy that routine's contract (e.g. a non-symmetric matrix given to a
    symmetric eigensolver).
    """

    default_detail = "Operator contract violated"


class SolverConvergenceException(ProdtopException):
    default_detail = "Linear solver did not converge"


class SolverDivergenceException(ProdtopException):
    """
    The sphere-constrained descent could not find a step that does not increase the objective.
    """

    default_detail = "Descent diverged"


class EmptyGridException(ProdtopException):
    default_detail = "Hexagonal grid is empty"


class InsufficientDataException(ProdtopException):
    default_detail = "Not enough data"


class IngestException(ProdtopException):
    """
    A drifter CSV does not carry the expected `id,timestamp,lat,lon` header.
    """

    default_detail = "Malformed drifter CSV"
