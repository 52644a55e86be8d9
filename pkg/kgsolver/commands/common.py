# kgsolver/commands/common.py - Shared command plumbing: options, config loading, exit codes
import logging
from pathlib import Path
from typing import Annotated, Callable, Optional

import typer
from rich.console import Console

from kgsolver.config import settings
from kgsolver.errors import ConfigError, ConvergenceError, KGSError
from kgsolver.reporting import RunReporter, configure_logging
from kgsolver.schemas.run import RunConfig
from kgsolver.validation import load_run_config

logger = logging.getLogger(__name__)
console = Console(stderr=True)

ConfigOption = Annotated[Path, typer.Option("--config", "-c", help="JSON run configuration")]
OutputOption = Annotated[
    Optional[Path], typer.Option("--output", "-o", help="Output directory (overrides output_dir)")
]
SeedOption = Annotated[Optional[int], typer.Option("--seed", help="Seed (overrides the config seed)")]
ThreadsOption = Annotated[
    Optional[int],
    typer.Option("--threads", envvar="KGS_THREADS", help="Concurrent sweep points; env KGS_THREADS"),
]

CommandBody = Callable[[RunConfig, RunReporter, int], None]


def execute(
    command: str,
    config_path: Path,
    output: Optional[Path],
    seed: Optional[int],
    threads: Optional[int],
    body: CommandBody,
):
    """Load the config, run `body`, write the manifest and exit.

    Exit 0 when every stage converged, 1 on non-convergence, 2 on invalid input.
    """
    configure_logging()
    try:
        config = load_run_config(config_path)
    except ConfigError as exc:
        console.print(f"[bold red]invalid config[/bold red] {config_path}: {exc.detail}")
        raise typer.Exit(code=exc.exit_code)
    if seed is not None:
        config = config.model_copy(update={"seed": seed})

    output_dir = Path(output or config.output_dir or settings.default_output_dir)
    configure_logging(output_dir)
    reporter = RunReporter(command, config, output_dir)
    n_threads = settings.get_thread_count(threads)
    logger.info("%s: grid N=%d L=%g, %d thread(s)", command, config.grid.n_per_axis,
                config.grid.box_length, n_threads)

    try:
        body(config, reporter, n_threads)
        exit_code = 0 if reporter.all_converged else 1
    except ConvergenceError as exc:
        reporter.add_stage(command, converged=False, iterations=exc.iterations,
                           residual=exc.best_residual, detail=exc.detail)
        exit_code = exc.exit_code
    except KGSError as exc:
        reporter.add_stage(command, converged=False, detail=exc.detail)
        console.print(f"[bold red]{type(exc).__name__}[/bold red]: {exc.detail}")
        exit_code = exc.exit_code

    reporter.write_manifest(exit_code)
    if exit_code == 0:
        console.print(f"[green]{command}[/green] finished; results in {output_dir}")
    elif exit_code == 1:
        console.print(f"[yellow]{command}[/yellow] did not fully converge; see {output_dir / 'manifest.json'}")
    raise typer.Exit(code=exit_code)
