from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field
from datetime import UTC, datetime
from typing import Any

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError, CommandParser

from core.exceptions import ProdtopException
from core.serializers import RunConfigSerializer

logger = logging.getLogger(__name__)

_CONTROL_FIELDS = ("seed", "validate_only", "verbosity")

# Django's -v 2 / -v 3 raise the `core` logger; lower verbosities keep PRODTOP_LOG_LEVEL.
_VERBOSITY_LEVELS = {2: logging.INFO, 3: logging.DEBUG}


@dataclass(frozen=True)
class RunConfig:
    """
    Validated options of one CLI run. `params` holds everything that is neither a path nor a control flag; together
    with the inputs and the seed it makes up the reproducibility header written into every output.
    """

    subcommand: str
    inputs: Mapping[str, Any] = field(default_factory=dict)
    outputs: Mapping[str, Any] = field(default_factory=dict)
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 7
    verbosity: int = 1
    validate_only: bool = False

    @classmethod
    def from_validated(
        cls, subcommand: str, serializer: RunConfigSerializer, validated: Mapping[str, Any]
    ) -> RunConfig:
        inputs = {name: validated.get(name) for name in serializer.input_fields}
        outputs = {name: validated.get(name) for name in serializer.output_fields}
        skipped = {*inputs, *outputs, *_CONTROL_FIELDS}
        seed = validated.get("seed")
        return cls(
            subcommand=subcommand,
            inputs=inputs,
            outputs=outputs,
            params={name: value for name, value in validated.items() if name not in skipped},
            seed=settings.PRODTOP_DEFAULT_SEED if seed is None else seed,
            verbosity=validated.get("verbosity", 1),
            validate_only=validated.get("validate_only", False),
        )

    def header_lines(self) -> list[str]:
        """Version, one timestamp line, seed, sorted JSON parameters. Output paths are left out."""
        described = {**{name: value for name, value in self.inputs.items() if value is not None}, **self.params}
        return [
            f"prodtop {settings.PRODTOP_VERSION} {self.subcommand}",
            f"generated {datetime.now(UTC).isoformat(timespec='seconds')}",
            f"seed {self.seed}",
            f"params {json.dumps(described, sort_keys=True, default=str)}",
        ]


def add_run_options(parser: CommandParser) -> None:
    parser.add_argument(
        "--validate",
        action="store_true",
        dest="validate_only",
        help="Load and check the inputs, print 'ok', compute nothing.",
    )
    parser.add_argument("--seed", type=int, help="Random seed (default: PRODTOP_DEFAULT_SEED).")


def _format_errors(errors: Any, prefix: str = "") -> list[str]:
    if isinstance(errors, Mapping):
        lines = []
        for name, detail in errors.items():
            label = "" if name == "non_field_errors" else f"{prefix}{name.replace('_', '-')}"
            lines.extend(_format_errors(detail, f"{label}: " if label else prefix))
        return lines
    if isinstance(errors, list):
        return [line for detail in errors for line in _format_errors(detail, prefix)]
    return [f"{prefix}{errors}"]


class ProdtopCommand(BaseCommand):
    """
    Base class of the prodtop subcommands. Options are validated with a DRF serializer into a `RunConfig`, and
    service exceptions are turned into a one-line `CommandError` carrying the exception's exit code.
    """

    requires_system_checks: list[str] = []
    serializer_class: type[RunConfigSerializer] | None = None
    serializer_classes: Mapping[str, type[RunConfigSerializer]] = {}

    @property
    def log_prefix(self) -> str:
        return f"[{type(self).__module__.rsplit('.', 1)[-1].title()}Command]"

    def get_serializer_class(self, options: Mapping[str, Any]) -> type[RunConfigSerializer]:
        if self.serializer_class is not None:
            return self.serializer_class
        return self.serializer_classes[options["action"]]

    def subcommand_name(self, options: Mapping[str, Any]) -> str:
        name = type(self).__module__.rsplit(".", 1)[-1]
        return f"{name} {options['action']}" if options.get("action") else name

    def build_config(self, options: Mapping[str, Any]) -> RunConfig:
        serializer_class = self.get_serializer_class(options)
        known = serializer_class().fields
        data = {name: value for name, value in options.items() if name in known and value is not None}
        serializer = serializer_class(data=data)
        if not serializer.is_valid():
            message = "; ".join(_format_errors(serializer.errors))
            logger.warning(f"{self.log_prefix} Invalid options: {message}")
            raise CommandError(message, returncode=1)
        return RunConfig.from_validated(self.subcommand_name(options), serializer, serializer.validated_data)

    def handle(self, *args: Any, **options: Any) -> None:
        level = _VERBOSITY_LEVELS.get(options.get("verbosity", 1))
        if level is not None:
            logging.getLogger("core").setLevel(level)

        config = self.build_config(options)
        try:
            if config.validate_only:
                self.check_inputs(config)
                self.stdout.write("ok")
                return
            self.run(config)
        except ProdtopException as e:
            logger.warning(f"{self.log_prefix} {type(e).__name__}: {e.detail}")
            raise CommandError(e.detail, returncode=e.exit_code) from e
        except OSError as e:
            logger.warning(f"{self.log_prefix} I/O failure: {e}")
            raise CommandError(str(e), returncode=1) from e

    def check_inputs(self, config: RunConfig) -> None:
        """Parse every input of the run. Existence of input files is already checked by the serializer."""

    def run(self, config: RunConfig) -> None:
        raise NotImplementedError
