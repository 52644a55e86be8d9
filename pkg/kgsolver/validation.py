# kgsolver/validation.py - Strict loading of run configurations
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import orjson
from pydantic import ValidationError

from kgsolver.errors import ConfigError
from kgsolver.schemas.run import RunConfig

logger = logging.getLogger(__name__)


class ConfigValidation:
    """Helpers that turn parser and schema failures into line-level messages"""

    @staticmethod
    def read_text(path: Union[str, Path]) -> str:
        try:
            return Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc

    @staticmethod
    def parse_json(text: str) -> Dict[str, Any]:
        try:
            document = orjson.loads(text)
        except orjson.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(document, dict):
            raise ConfigError("line 1: the config must be a JSON object")
        return document

    @staticmethod
    def locate_line(text: str, location: Sequence[Union[str, int]]) -> Optional[int]:
        """Line of the innermost key of `location` found in order in the raw text"""
        position = None
        start = 0
        for part in location:
            if not isinstance(part, str):
                continue
            index = text.find(f'"{part}"', start)
            if index < 0:
                break
            position = start = index
        if position is None:
            return None
        return text.count("\n", 0, position) + 1

    @staticmethod
    def format_errors(text: str, exc: ValidationError) -> str:
        messages: List[str] = []
        for error in exc.errors():
            location = error["loc"]
            path = ".".join(str(part) for part in location) or "<root>"
            message = error["msg"].removeprefix("Value error, ")
            line = ConfigValidation.locate_line(text, location)
            suffix = f" (line {line})" if line is not None else ""
            messages.append(f"{path}: {message}{suffix}")
        return "; ".join(messages)


def parse_run_config(text: str) -> RunConfig:
    document = ConfigValidation.parse_json(text)
    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        detail = ConfigValidation.format_errors(text, exc)
        logger.error("invalid config: %s", detail)
        raise ConfigError(detail) from exc


def load_run_config(path: Union[str, Path]) -> RunConfig:
    return parse_run_config(ConfigValidation.read_text(path))
