"""
The `prodtop` console script: a thin dispatcher over the `core` management commands, so `prodtop spectral ...` behaves
like `python manage.py spectral ...` without exposing Django's own commands.
"""

import os
import sys
from collections.abc import Sequence

COMMANDS = ("complex", "product", "spectral", "interpolate", "demo", "drifter")


def _setup() -> None:
    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "config.settings")
    import django
    from django.apps import apps

    if not apps.ready:
        django.setup()


def _usage() -> str:
    from django.core.management import load_command_class

    lines = ["usage: prodtop <command> [options]", "", "commands:"]
    for name in COMMANDS:
        summary = load_command_class("core", name).help.split(". ")[0].rstrip(".")
        lines.append(f"  {name:<12} {summary}")
    lines += ["", "Run 'prodtop <command> --help' for the options of a command."]
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> int:
    """Run one subcommand and return its exit code: 0 on success, 1 on bad input, 2 on usage errors."""
    args = list(sys.argv[1:] if argv is None else argv)
    _setup()

    from django.conf import settings
    from django.core.management import load_command_class

    if args and args[0] == "--version":
        print(f"prodtop {settings.PRODTOP_VERSION}")
        return 0
    if not args or args[0] in ("-h", "--help"):
        print(_usage(), file=sys.stdout if args else sys.stderr)
        return 0 if args else 2
    name, rest = args[0], args[1:]
    if name not in COMMANDS:
        print(f"prodtop: unknown command {name!r}\n\n{_usage()}", file=sys.stderr)
        return 2

    try:
        load_command_class("core", name).run_from_argv(["prodtop", name, *rest])
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
