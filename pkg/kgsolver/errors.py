# kgsolver/errors.py - Exceptions carrying a process exit code
from typing import Optional


class KGSError(Exception):
    """Base error; `exit_code` is what the CLI returns when it escapes a command"""

    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(KGSError):
    exit_code = 2


class GridError(KGSError, ValueError):
    exit_code = 2


class ModelError(KGSError, ValueError):
    exit_code = 2


class DimensionCapError(KGSError, ValueError):
    exit_code = 2


class ConvergenceError(KGSError):
    """Iterative solver gave up; carries the best residual it reached"""

    def __init__(self, detail: str, best_residual: Optional[float] = None, iterations: int = 0):
        super().__init__(detail)
        self.best_residual = best_residual
        self.iterations = iterations


class FixedPointRefused(KGSError):
    pass


class TruncationError(KGSError, ValueError):
    """Truncated Fock space too small for the requested coherent amplitude"""

    def __init__(self, detail: str, required_n_max: int):
        super().__init__(detail)
        self.required_n_max = required_n_max
