from __future__ import annotations

from pathlib import Path
from typing import Any

from rest_framework import serializers
from rest_framework.exceptions import ValidationError
from rest_framework.serializers import ListSerializer

from core.exceptions import ParameterException
from core.services.hex_grid_service import BBox


def _validate_vertex_id(value: Any) -> None:
    if isinstance(value, bool) or not isinstance(value, int | str):
        raise ValidationError(detail=f"Ensure vertex and cell ids are integers or strings, got {value!r}.")


def _validate_simplex(value: list[Any]) -> None:
    for vertex in value:
        _validate_vertex_id(vertex)


def _validate_boundary_entry(value: list[Any]) -> None:
    face, coefficient = value
    _validate_vertex_id(face)
    if isinstance(coefficient, bool) or not isinstance(coefficient, int):
        raise ValidationError(detail=f"Ensure boundary coefficients are integers, got {coefficient!r}.")


def _validate_existing_file(value: str) -> None:
    if not Path(value).is_file():
        raise ValidationError(detail=f"No such file: {value}")


def _validate_lag_list(value: list[int]) -> None:
    if len(set(value)) != len(value):
        raise ValidationError(detail="Ensure temporal lags are distinct.")


class _CellSerializer(serializers.Serializer):
    """
    Serializer class for one cell of an abstract cell complex document.
    """

    id = serializers.JSONField(validators=[_validate_vertex_id])
    dim = serializers.IntegerField(min_value=0)
    boundary = serializers.ListField(
        child=serializers.ListField(
            child=serializers.JSONField(), min_length=2, max_length=2, validators=[_validate_boundary_entry]
        ),
        required=False,
        default=list,
    )


class ComplexDocumentSerializer(serializers.Serializer):
    """
    Serializer class for JSON complex documents. A document holds exactly one of `top_simplices` (a simplicial
    complex, downward closure implied), `cells` (an abstract cell complex) or `product` (a pair of such documents
    under `x` and `y`).
    """

    top_simplices = serializers.ListField(
        child=serializers.ListField(child=serializers.JSONField(), allow_empty=False, validators=[_validate_simplex]),
        required=False,
    )
    cells: ListSerializer[_CellSerializer] = serializers.ListSerializer(child=_CellSerializer(), required=False)
    product = serializers.DictField(child=serializers.JSONField(), required=False)
    label = serializers.CharField(max_length=64, required=False)

    def validate_product(self, value: dict[str, Any]) -> dict[str, Any]:
        if set(value) != {"x", "y"}:
            raise ValidationError(detail="Ensure a product document has exactly the keys 'x' and 'y'.")
        factors = {}
        for key in ("x", "y"):
            factor = ComplexDocumentSerializer(data=value[key])
            if not factor.is_valid():
                raise ValidationError(detail={key: factor.errors})
            if "product" in factor.validated_data:
                raise ValidationError(detail="Ensure product factors are not products themselves.")
            factors[key] = factor.validated_data
        return factors

    def validate(self, attrs: dict[str, Any]) -> dict[str, Any]:
        present = [key for key in ("top_simplices", "cells", "product") if key in attrs]
        if len(present) != 1:
            raise ValidationError(detail="Ensure the document has exactly one of 'top_simplices', 'cells', 'product'.")
        return attrs


class _GradeField(serializers.Field):
    """
    A grade given as `k` or `i,j`. Always deserializes to a pair; a plain `k` becomes `(k, 0)`.
    """

    def to_internal_value(self, data: Any) -> tuple[int, int]:
        parts = [part.strip() for part in str(data).split(",")]
        if len(parts) not in (1, 2):
            raise ValidationError(detail="Ensure the grade is 'k' or 'i,j'.")
        try:
            numbers = [int(part) for part in parts]
        except ValueError as e:
            raise ValidationError(detail="Ensure the grade is made of integers.") from e
        if any(number < 0 for number in numbers):
            raise ValidationError(detail="Ensure grades are non-negative.")
        return (numbers[0], numbers[1] if len(numbers) == 2 else 0)

    def to_representation(self, value: tuple[int, int]) -> str:
        return f"{value[0]},{value[1]}"


class _FloatListField(serializers.Field):
    """
    A comma-separated list of non-negative floats, e.g. `0,1e-5,1e-4`.
    """

    def to_internal_value(self, data: Any) -> list[float]:
        if isinstance(data, list | tuple):
            parts = [str(part) for part in data]
        else:
            parts = [part for part in str(data).split(",") if part.strip()]
        try:
            values = [float(part) for part in parts]
        except ValueError as e:
            raise ValidationError(detail="Ensure the list holds comma-separated numbers.") from e
        if not values:
            raise ValidationError(detail="Ensure the list is not empty.")
        if any(value < 0 for value in values):
            raise ValidationError(detail="Ensure every value is non-negative.")
        return values

    def to_representation(self, value: list[float]) -> list[float]:
        return list(value)


class RunConfigSerializer(serializers.Serializer):
    """
    Options shared by every subcommand. Subclasses add their own fields; `input_fields` and `output_fields` name the
    path fields so the resulting `RunConfig` can separate them from numeric parameters.
    """

    input_fields: tuple[str, ...] = ()
    output_fields: tuple[str, ...] = ()

    seed = serializers.IntegerField(min_value=0, required=False, allow_null=True, default=None)
    validate_only = serializers.BooleanField(default=False)
    verbosity = serializers.IntegerField(min_value=0, max_value=3, default=1)


class ComplexBuildSerializer(RunConfigSerializer):
    input_fields = ("input",)
    output_fields = ("out",)

    input = serializers.CharField(validators=[_validate_existing_file])
    out = serializers.CharField(required=False, allow_null=True, default=None)
    summary = serializers.BooleanField(default=False)


class ComplexBoundarySerializer(RunConfigSerializer):
    input_fields = ("input",)
    output_fields = ("out",)

    input = serializers.CharField(validators=[_validate_existing_file])
    dim = serializers.IntegerField(min_value=0)
    out = serializers.CharField()


class ProductSerializer(RunConfigSerializer):
    input_fields = ("x", "y")
    output_fields = ("emit",)

    x = serializers.CharField(validators=[_validate_existing_file])
    y = serializers.CharField(validators=[_validate_existing_file])
    grade = _GradeField()
    operator = serializers.ChoiceField(
        choices=["laplacian", "assembled-laplacian", "boundary-spatial", "boundary-temporal"], default="laplacian"
    )
    alpha_x = serializers.FloatField(min_value=0, default=1.0)
    alpha_y = serializers.FloatField(min_value=0, default=1.0)
    emit = serializers.CharField(required=False, allow_null=True, default=None)


class SpectralSerializer(RunConfigSerializer):
    input_fields = ("complex",)
    output_fields = ("out",)

    complex = serializers.CharField(validators=[_validate_existing_file])
    grade = _GradeField()
    modes = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    alpha_x = serializers.FloatField(min_value=0, default=1.0)
    alpha_y = serializers.FloatField(min_value=0, default=1.0)
    hodge = serializers.BooleanField(default=False)
    out = serializers.CharField(required=False, allow_null=True, default=None)


class InterpolateSerializer(RunConfigSerializer):
    input_fields = ("complex", "obs", "truth")
    output_fields = ("out",)

    complex = serializers.CharField(validators=[_validate_existing_file])
    obs = serializers.CharField(validators=[_validate_existing_file])
    truth = serializers.CharField(required=False, allow_null=True, default=None, validators=[_validate_existing_file])
    alpha_s = serializers.FloatField(min_value=0)
    alpha_t = serializers.FloatField(min_value=0)
    lam = serializers.FloatField()
    steps = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    temporal_lag = serializers.ListField(
        child=serializers.IntegerField(min_value=1), default=list, validators=[_validate_lag_list]
    )
    out = serializers.CharField()

    def validate_lam(self, value: float) -> float:
        if value <= 0:
            raise ValidationError(detail="Ensure lambda is strictly positive.")
        return value


class DemoSerializer(RunConfigSerializer):
    output_fields = ("out",)

    experiment = serializers.ChoiceField(choices=["fig1"])
    out = serializers.CharField(required=False, allow_null=True, default=None)


class DrifterRunSerializer(RunConfigSerializer):
    input_fields = ("pings", "mask")
    output_fields = ("out", "components")

    pings = serializers.CharField(validators=[_validate_existing_file])
    bbox = serializers.CharField()
    hex_size = serializers.FloatField(default=0.3)
    mask = serializers.CharField(required=False, allow_null=True, default=None, validators=[_validate_existing_file])
    split = serializers.FloatField(default=0.8)
    alpha_s = _FloatListField(required=False, allow_null=True, default=None)
    alpha_t = _FloatListField(required=False, allow_null=True, default=None)
    temporal_lag = serializers.ListField(
        child=serializers.IntegerField(min_value=1), default=list, validators=[_validate_lag_list]
    )
    max_iter = serializers.IntegerField(min_value=1, required=False, allow_null=True, default=None)
    out = serializers.CharField()
    components = serializers.CharField(required=False, allow_null=True, default=None)

    def validate_bbox(self, value: str) -> str:
        try:
            BBox.parse(value)
        except ParameterException as e:
            raise ValidationError(detail=e.detail) from e
        return value

    def validate_hex_size(self, value: float) -> float:
        if value <= 0:
            raise ValidationError(detail="Ensure the hexagon size is positive.")
        return value

    def validate_split(self, value: float) -> float:
        if not 0 < value < 1:
            raise ValidationError(detail="Ensure the training fraction lies strictly between 0 and 1.")
        return value


class DrifterSynthSerializer(RunConfigSerializer):
    output_fields = ("out",)

    count = serializers.IntegerField(min_value=1, default=60)
    years = serializers.IntegerField(min_value=1, default=5)
    days = serializers.IntegerField(min_value=1, default=90)
    start_year = serializers.IntegerField(default=2000)
    out = serializers.CharField()
