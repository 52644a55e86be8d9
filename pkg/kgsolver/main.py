# kgsolver/main.py - Command-line application: logging, exception handlers, command registration
import logging
import sys
import secrets
import traceback

import click
import typer
from rich.console import Console

from kgsolver.commands import fock, solve, sweeps
from kgsolver.config import settings
from kgsolver.errors import KGSError
from kgsolver.reporting import configure_logging

logger = logging.getLogger(__name__)
console = Console(stderr=True)

app = typer.Typer(
    name="kgsolver",
    help=(
        "Ground states of the quasi-classical Klein-Gordon-Schrodinger / Hartree energy "
        "on a periodic spectral grid. Set KGS_THREADS to change the default number of "
        "concurrent sweep points."
    ),
    no_args_is_help=True,
    add_completion=False,
    pretty_exceptions_enable=False,
)


def include_router(target: typer.Typer, router: typer.Typer):
    """Register a command module's commands at the top level"""
    target.registered_commands.extend(router.registered_commands)


# === INCLUDE COMMANDS ===

include_router(app, solve.router)
include_router(app, sweeps.router)
include_router(app, fock.router)


@app.callback()
def root(debug: bool = typer.Option(False, "--debug", help="Log at DEBUG level")):
    if debug:
        settings.debug = True
    configure_logging()


# === EXCEPTION HANDLERS ===

def handle_kgs_error(exc: KGSError) -> int:
    logger.error("%s: %s", type(exc).__name__, exc.detail)
    console.print(f"[bold red]{type(exc).__name__}[/bold red]: {exc.detail}")
    return exc.exit_code


def handle_unexpected(exc: Exception) -> int:
    """Catch-all: log the traceback under an error id, print only the id"""
    error_id = secrets.token_urlsafe(16)
    logger.error("Unhandled exception [%s]: %s", error_id, traceback.format_exc())
    console.print(f"[bold red]internal error[/bold red] {type(exc).__name__}; see the log for error id {error_id}")
    return 1


def main():
    try:
        code = app(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        code = exc.exit_code
    except click.exceptions.Abort:
        console.print("aborted")
        code = 1
    except KGSError as exc:
        code = handle_kgs_error(exc)
    except Exception as exc:
        code = handle_unexpected(exc)
    sys.exit(code or 0)


if __name__ == "__main__":
    main()
