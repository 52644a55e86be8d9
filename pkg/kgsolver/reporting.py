# kgsolver/reporting.py - Result files: CSV tables, plot data, manifest, run log
import logging
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import orjson
import pandas as pd

from kgsolver.config import settings
from kgsolver.schemas.run import RunConfig, RunManifest, StageSummary

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
FLOAT_FORMAT = "%.17g"


def configure_logging(output_dir: Optional[Path] = None):
    """Stream handler always; run.log inside output_dir when one is given"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if output_dir is not None:
        output_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(output_dir / settings.log_file))
    logging.basicConfig(
        level=getattr(logging, settings.get_log_level(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _atomic_write(path: Path, payload: bytes):
    fd, temp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(temp, path)
    except BaseException:
        if os.path.exists(temp):
            os.remove(temp)
        raise


def render_plot(data_path: Path, xlabel: str, ylabel: str, logscale: bool = False) -> Path:
    """PNG next to a two-column plot-data file"""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x, y = np.loadtxt(data_path, unpack=True, ndmin=2)
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    if logscale:
        ax.loglog(x, np.abs(y), "o-")
    else:
        ax.plot(x, y, "o-")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    png = data_path.with_suffix(".png")
    fig.savefig(png, dpi=150)
    plt.close(fig)
    return png


class RunReporter:
    """Collects the files and stage summaries of one command run"""

    def __init__(self, command: str, config: RunConfig, output_dir: Path):
        self.command = command
        self.config = config
        self.output_dir = output_dir
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.files: List[str] = []
        self.stages: List[StageSummary] = []
        self.started_at = datetime.now(timezone.utc).isoformat()
        self._clock = time.perf_counter()

    def _register(self, path: Path) -> Path:
        name = path.relative_to(self.output_dir).as_posix()
        if name not in self.files:
            self.files.append(name)
        return path

    def add_stage(self, name: str, converged: bool, iterations: Optional[int] = None,
                  residual: Optional[float] = None, detail: str = "") -> StageSummary:
        stage = StageSummary(name=name, converged=converged, iterations=iterations,
                             residual=residual, detail=detail)
        self.stages.append(stage)
        logger.info("stage %s: converged=%s %s", name, converged, detail)
        return stage

    @property
    def all_converged(self) -> bool:
        return all(stage.converged for stage in self.stages)

    def write_table(self, name: str, rows: Sequence[Dict], units: Dict[str, str]) -> Path:
        """CSV: a `# units:` row, then the header, then rows with 17 significant digits"""
        frame = pd.DataFrame(list(rows), columns=list(units))
        path = self.output_dir / f"{name}.csv"
        units_row = "# units: " + ",".join(f"{column}={unit}" for column, unit in units.items())
        body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        _atomic_write(path, (units_row + "\n" + body).encode("utf-8"))
        return self._register(path)

    def write_plot_data(self, name: str, x, y, xlabel: str, ylabel: str, logscale: bool = False) -> Path:
        path = self.output_dir / f"{name}.dat"
        columns = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        np.savetxt(path, columns, fmt=FLOAT_FORMAT, header=f"{xlabel} {ylabel}")
        self._register(path)
        if settings.render_plots:
            self._register(render_plot(path, xlabel, ylabel, logscale))
        return path

    def write_json(self, name: str, payload) -> Path:
        path = self.output_dir / f"{name}.json"
        _atomic_write(path, orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY))
        return self._register(path)

    def write_manifest(self, exit_code: int) -> Path:
        path = self.output_dir / "manifest.json"
        log_path = self.output_dir / settings.log_file
        if log_path.exists():
            self._register(log_path)
        manifest = RunManifest(
            command=self.command,
            artifact_version=settings.artifact_version,
            config=self.config.model_dump(mode="json"),
            started_at=self.started_at,
            wall_time_s=time.perf_counter() - self._clock,
            exit_code=exit_code,
            stages=self.stages,
            files=self.files + ["manifest.json"],
        )
        _atomic_write(path, orjson.dumps(manifest.model_dump(mode="json"), option=orjson.OPT_INDENT_2))
        logger.info("manifest written to %s (exit %d)", path, exit_code)
        return path
