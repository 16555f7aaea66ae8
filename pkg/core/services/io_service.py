from __future__ import annotations

import io
import json
import logging
from collections.abc import Iterable, Mapping, Sequence
from itertools import combinations
from pathlib import Path
from typing import Any, cast

import numpy as np
import pandas as pd
import scipy.io
import scipy.sparse as sp

from core.exceptions import ComplexFormatException, ParameterException
from core.serializers import ComplexDocumentSerializer
from core.services.complex_service import (
    AbstractCellComplex,
    CellSpec,
    Complex,
    ComplexService,
    SimplicialComplex,
)
from core.services.drifter_service import Trajectory
from core.services.interpolation_service import FlowObservation, SpatiotemporalFlow
from core.services.operators import SparseOperator
from core.services.product_service import ProductComplex, ProductService

logger = logging.getLogger(__name__)

OBSERVATION_COLUMNS = ["t", "edge_u", "edge_v", "value"]


class IOService:
    """
    Reading and writing the artifact's file formats: JSON complex documents, Matrix Market operators, CSV flows and
    observations, drifter ping CSVs and land masks.
    """

    @staticmethod
    def load_document(path: str | Path) -> dict[str, Any]:
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except UnicodeDecodeError as e:
            raise ComplexFormatException(f"{path}: not a UTF-8 text file") from e
        except json.JSONDecodeError as e:
            raise ComplexFormatException(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e

        serializer = ComplexDocumentSerializer(data=raw)
        if not serializer.is_valid():
            raise ComplexFormatException(f"{path}: {json.dumps(serializer.errors, sort_keys=True)}")
        return dict(serializer.validated_data)

    @staticmethod
    def build_from_document(document: Mapping[str, Any], default_label: str | None = None) -> Complex | ProductComplex:
        """
        Build the complex a validated document describes. A document without `label` takes `default_label`, and
        unlabeled product factors take `<label>.x` and `<label>.y`, so loading a file twice gives the same labels.
        """
        label = document.get("label") or default_label
        if "top_simplices" in document:
            return ComplexService.build_simplicial_complex(document["top_simplices"], label=label)
        if "cells" in document:
            cells = [
                CellSpec(
                    id=cell["id"],
                    dim=cell["dim"],
                    boundary=tuple((face, coefficient) for face, coefficient in cell["boundary"]),
                )
                for cell in document["cells"]
            ]
            return ComplexService.build_cell_complex(cells, label=label)

        # Nested products are rejected by the serializer.
        prefix = f"{label}." if label else ""
        factor_x = cast(Complex, IOService.build_from_document(document["product"]["x"], f"{prefix}x"))
        factor_y = cast(Complex, IOService.build_from_document(document["product"]["y"], f"{prefix}y"))
        return ProductService.product_complex(factor_x, factor_y, label=label)

    @staticmethod
    def load_complex(path: str | Path) -> Complex | ProductComplex:
        """Parse and validate a JSON complex document and build it; unlabeled documents take the file stem."""
        return IOService.build_from_document(IOService.load_document(path), default_label=Path(path).stem)

    @staticmethod
    def load_single_complex(path: str | Path) -> Complex:
        complex_ = IOService.load_complex(path)
        if isinstance(complex_, ProductComplex):
            raise ComplexFormatException(f"{path}: expected a single complex, got a product document")
        return complex_

    @staticmethod
    def load_simplicial_complex(path: str | Path) -> SimplicialComplex:
        complex_ = IOService.load_complex(path)
        if not isinstance(complex_, SimplicialComplex):
            raise ComplexFormatException(f"{path}: expected a simplicial complex ('top_simplices')")
        return complex_

    @staticmethod
    def complex_to_document(complex_: Complex) -> dict[str, Any]:
        """
        Normalized JSON document: maximal simplices for a simplicial complex, every cell with its boundary for a cell
        complex. Loading the document rebuilds the same complex.
        """
        if isinstance(complex_, SimplicialComplex):
            maximal: list[list[Any]] = []
            for k in range(complex_.dimension, -1, -1):
                covered = {face for simplex in maximal for face in _faces(tuple(simplex))}
                maximal.extend(list(simplex) for simplex in complex_.simplices(k) if simplex not in covered)
            return {"label": complex_.label, "top_simplices": maximal}
        return IOService.cell_complex_to_document(complex_)

    @staticmethod
    def cell_complex_to_document(complex_: AbstractCellComplex) -> dict[str, Any]:
        return {
            "label": complex_.label,
            "cells": [
                {
                    "id": cell,
                    "dim": k,
                    "boundary": [[face, coefficient] for face, coefficient in complex_.boundary_entries[cell]],
                }
                for k in range(complex_.dimension + 1)
                for cell in complex_.cells(k)
            ],
        }

    @staticmethod
    def write_json(path: str | Path, document: Mapping[str, Any]) -> None:
        Path(path).write_text(json.dumps(document, indent=2) + "\n")

    @staticmethod
    def write_matrix_market(path: str | Path, operator: SparseOperator, header: Sequence[str]) -> None:
        """Coordinate Matrix Market file; integer field for integer operators so entries round-trip exactly."""
        matrix = operator.matrix
        integer = np.issubdtype(matrix.dtype, np.integer)
        comment = "\n".join([*header, f"rows {operator.rows}", f"cols {operator.cols}"])
        buffer = io.BytesIO()
        scipy.io.mmwrite(
            buffer,
            sp.coo_array(matrix),
            comment=comment,
            field="integer" if integer else "real",
            precision=None if integer else 17,
            symmetry="general",
        )
        Path(path).write_bytes(buffer.getvalue())

    @staticmethod
    def read_matrix_market(path: str | Path) -> sp.csr_array:
        try:
            with Path(path).open("rb") as handle:
                return sp.csr_array(scipy.io.mmread(handle))
        except ValueError as e:
            raise ComplexFormatException(f"{path}: not a Matrix Market file ({e})") from e

    @staticmethod
    def write_csv(path: str | Path, frame: pd.DataFrame, header: Sequence[str]) -> None:
        """CSV preceded by `#`-prefixed header lines."""
        with Path(path).open("w", newline="") as handle:
            for line in header:
                handle.write(f"# {line}\n")
            frame.to_csv(handle, index=False, lineterminator="\n")

    @staticmethod
    def read_csv(path: str | Path, columns: Sequence[str]) -> pd.DataFrame:
        try:
            frame = pd.read_csv(path, comment="#", skipinitialspace=True, dtype=str)
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise ComplexFormatException(f"{path}: could not parse CSV ({e})") from e
        found = [str(column).strip() for column in frame.columns]
        if found != list(columns):
            raise ComplexFormatException(f"{path}: expected columns {','.join(columns)}, got {','.join(found)}")
        frame.columns = list(columns)
        return frame

    @staticmethod
    def _edge_lookup(complex_: SimplicialComplex) -> tuple[dict[str, Any], Mapping[tuple[Any, ...], int]]:
        return {str(vertex): vertex for vertex in complex_.vertices}, complex_.index(1)

    @staticmethod
    def _numeric(frame: pd.DataFrame, column: str, path: str | Path) -> pd.Series:
        values = pd.to_numeric(frame[column], errors="coerce")
        if values.isna().any():
            row = int(values.isna().to_numpy().argmax())
            raise ComplexFormatException(
                f"{path}: non-numeric {column} {frame[column].iloc[row]!r} in data row {row + 1}"
            )
        return values

    @staticmethod
    def read_observations(
        path: str | Path, complex_: SimplicialComplex, steps: int | None = None
    ) -> FlowObservation:
        """
        Observations from a `t,edge_u,edge_v,value` CSV, t 0-based. An edge given in descending vertex order is turned
        around and its value negated, so values always refer to the ascending reference orientation.
        """
        frame = IOService.read_csv(path, OBSERVATION_COLUMNS)
        vertices, edge_index = IOService._edge_lookup(complex_)
        times = IOService._numeric(frame, "t", path)
        values = IOService._numeric(frame, "value", path)

        entries: list[tuple[int, int, float]] = []
        for row, (t, u, v, value) in enumerate(zip(times, frame["edge_u"], frame["edge_v"], values, strict=True)):
            if t != int(t) or t < 0:
                raise ComplexFormatException(f"{path}: time index {t} in data row {row + 1} is not a natural number")
            try:
                a, b = vertices[str(u).strip()], vertices[str(v).strip()]
            except KeyError as e:
                raise ComplexFormatException(f"{path}: unknown vertex {e.args[0]!r} in data row {row + 1}") from e
            sign = 1.0
            if b < a:
                a, b, sign = b, a, -1.0
            if (a, b) not in edge_index:
                raise ComplexFormatException(f"{path}: ({a}, {b}) in data row {row + 1} is not an edge")
            entries.append((int(t), edge_index[(a, b)], sign * float(value)))

        inferred = max((t for t, _, _ in entries), default=-1) + 1
        if steps is None:
            steps = max(inferred, 1)
        elif inferred > steps:
            raise ParameterException(f"{path}: observations reach t={inferred - 1} but only {steps} steps were given")
        try:
            return FlowObservation(steps=steps, edge_count=complex_.count(1), entries=tuple(entries))
        except ParameterException as e:
            raise ComplexFormatException(f"{path}: {e.detail}") from e

    @staticmethod
    def flow_frame(flow: SpatiotemporalFlow) -> pd.DataFrame:
        """`t,edge_u,edge_v,value` rows, time outer and edge inner."""
        rows = [
            (t, edge[0], edge[1], float(flow.values[t, e]))
            for t in range(flow.steps)
            for e, edge in enumerate(flow.edges)
        ]
        return pd.DataFrame(rows, columns=OBSERVATION_COLUMNS)

    @staticmethod
    def write_flow(path: str | Path, flow: SpatiotemporalFlow, header: Sequence[str]) -> None:
        IOService.write_csv(path, IOService.flow_frame(flow), header)

    @staticmethod
    def read_flow(path: str | Path, complex_: SimplicialComplex, steps: int | None = None) -> SpatiotemporalFlow:
        """A full flow in the `flow.csv` layout; entries not listed are zero."""
        observation = IOService.read_observations(path, complex_, steps)
        return SpatiotemporalFlow(values=observation.dense(), edges=complex_.simplices(1))

    @staticmethod
    def read_mask(path: str | Path) -> set[int]:
        """Land hexagon ids, one per line; blank lines and `#` comments are ignored."""
        ids: set[int] = set()
        for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
            content = line.split("#", 1)[0].strip()
            if not content:
                continue
            try:
                ids.add(int(content))
            except ValueError as e:
                raise ComplexFormatException(f"{path}: line {number} is not a hexagon id: {content!r}") from e
        return ids

    @staticmethod
    def write_pings(path: str | Path, trajectories: Iterable[Trajectory], header: Sequence[str]) -> None:
        """Pings in the `id,timestamp,lat,lon` layout read by drifter ingestion, ISO-8601 UTC timestamps."""
        rows = [
            (trajectory.buoy_id, ping.timestamp.isoformat(), ping.lat, ping.lon)
            for trajectory in trajectories
            for ping in trajectory.pings
        ]
        IOService.write_csv(path, pd.DataFrame(rows, columns=["id", "timestamp", "lat", "lon"]), header)


def _faces(simplex: tuple[Any, ...]) -> set[tuple[Any, ...]]:
    return {face for size in range(1, len(simplex) + 1) for face in combinations(simplex, size)}
