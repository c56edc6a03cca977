"""
IDQF Forwarding Simulator - Configuration Management
"""

from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field
from functools import lru_cache
from pathlib import Path
from typing import Literal


PACKAGE_DIR = Path(__file__).resolve().parent
TOPOLOGY_DIR = PACKAGE_DIR / "topologies"


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables (prefix ``IDQF_``)."""

    model_config = SettingsConfigDict(
        env_prefix="IDQF_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Logging
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Output locations
    out_dir: Path = Path("results")
    checkpoint_dir: Path = Path("checkpoints")

    # Experiment defaults
    default_topology: str = "sprint"
    default_seed: int = 42

    # Replicate runs are independent; >1 runs them in a process pool
    workers: int = Field(default=1, ge=1)

    @property
    def sprint_topology_path(self) -> Path:
        """Path of the shipped Sprint-like topology file."""
        return TOPOLOGY_DIR / "sprint.topo"


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
