"""
Application configuration settings.

Loads process-level configuration from environment variables using pydantic-settings.
Experiment parameters live in the run config file (see config/run_config.py).
"""

from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

DEFAULTS_DIR = Path(__file__).parent / "defaults"


class Settings(BaseSettings):
    """
    Process settings loaded from environment variables (prefix ``PILEMAP_``).

    A ``.env`` file in the working directory is honoured when present.
    """

    model_config = SettingsConfigDict(
        env_prefix="PILEMAP_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    app_name: str = Field(default="pilemap", description="Application name")
    app_version: str = Field(default="0.1.0", description="Application version")

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")
    log_format: str = Field(
        default="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        description="Log format string",
    )

    # Experiment defaults
    default_config_path: str = Field(
        default=str(DEFAULTS_DIR / "run.json"),
        description="Run config used when --config is not given",
    )
    default_output_dir: str = Field(default="./output", description="Default output directory")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """
        Normalise and validate the log level name.

        Args:
            v (str): Level name from the environment

        Returns:
            str: Upper-case level name

        Raises:
            ValueError: If the level is not a standard logging level
        """
        level = v.upper()
        if level not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return level


# Global settings instance
settings = Settings()
