"""Application configuration loaded from environment variables."""

from functools import lru_cache
from pathlib import Path

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Settings loaded from .env file or environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="CSH_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Logging
    log_level: str = "INFO"

    # Artifacts
    output_dir: str = "results"

    # Sweep parallelism (1 = run in-process)
    max_workers: int = 1

    # Constraint resolution
    constraint_method: str = "auto"  # auto | homotopy | squeeze | closed_form
    picard_max_iterations: int = 10_000
    box_radius: float = 2.0

    @property
    def output_path(self) -> Path:
        """Directory where reports and field dumps are written."""
        d = Path(self.output_dir)
        d.mkdir(parents=True, exist_ok=True)
        return d


@lru_cache
def get_settings() -> Settings:
    return Settings()
