# kgsolver/config.py - Process-level settings for the solver
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import List, Optional
from functools import lru_cache
import os


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="KGS_",
        case_sensitive=False,
        extra="ignore",
    )

    # === Environment Configuration ===
    environment: str = "development"  # development, staging, production
    debug: bool = False

    # === Logging ===
    log_level: str = "INFO"
    log_file: str = "run.log"  # written inside the output directory

    # === Parallelism ===
    threads: int = 1  # sweep points / random starts run concurrently
    fft_workers: int = 1  # scipy.fft internal workers

    # === Numerical caps ===
    eigensolver_max_iter: int = 10000
    fock_dimension_cap: int = 1_000_000
    dense_eigensolver_limit: int = 1000  # N^3 at or below this uses dense eigh

    # === Output ===
    default_output_dir: str = "results"
    render_plots: bool = False
    artifact_version: str = "1.0.0"

    # === Helper Methods ===

    def is_production(self) -> bool:
        return self.environment.lower() == "production"

    def get_log_level(self) -> str:
        """Effective log level: DEBUG when debugging, WARNING in production"""
        if self.debug:
            return "DEBUG"
        if self.is_production():
            return "WARNING"
        return self.log_level.upper()

    def get_thread_count(self, override: Optional[int] = None) -> int:
        """Thread count with CLI override, capped by the machine"""
        requested = override if override is not None else self.threads
        return max(1, min(requested, os.cpu_count() or 1))

    def validate_settings(self):
        """Validate critical settings"""
        errors: List[str] = []

        if self.threads < 1:
            errors.append("THREADS must be at least 1")

        if self.fft_workers < 1:
            errors.append("FFT_WORKERS must be at least 1")

        if self.eigensolver_max_iter < 1 or self.eigensolver_max_iter > 10000:
            errors.append("EIGENSOLVER_MAX_ITER must lie in [1, 10000]")

        if self.fock_dimension_cap < 1:
            errors.append("FOCK_DIMENSION_CAP must be positive")

        if self.get_log_level() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            errors.append(f"Unknown LOG_LEVEL {self.log_level!r}")

        # Production checks
        if self.is_production():
            if self.debug:
                errors.append("DEBUG must be False in production")

        if errors:
            raise ValueError(f"Configuration errors: {', '.join(errors)}")


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    settings = Settings()

    # Validate in production
    if settings.is_production():
        settings.validate_settings()

    return settings


settings = get_settings()
