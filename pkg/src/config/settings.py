import json
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings

from domain.exceptions import ConfigError


class Settings(BaseSettings):
    # App settings
    APP_NAME: str = "Trimmed Match Design"
    TOOL_VERSION: str = "0.1.0"
    LOG_LEVEL: str = "INFO"

    # Reproducibility
    DEFAULT_SEED: int = 0
    DEFAULT_WORKERS: int = 1

    # Period split (a week absorbs the day-of-week effect)
    DEFAULT_BLOCK_LENGTH_DAYS: int = 7
    DEFAULT_EVAL_DAYS: int = 14

    # Trimmed Match
    DESIGN_MAX_TRIM_RATE: float = Field(default=0.10, description="Upper trim rate during design")
    POST_ANALYSIS_MAX_TRIM_RATE: float = Field(default=0.25, description="Upper trim rate for post analysis")

    # Power analysis
    DEFAULT_REPLICATES: int = 1000
    DEFAULT_ALPHA: float = 0.10
    DEFAULT_BETA: float = 0.90
    MAX_FAILURE_RATE: float = 0.01

    # Rerandomization
    MAX_REDRAWS: int = 1000
    SIGN_TEST_MIN_P: float = 0.2
    SIM_IROAS_RMSE_FRACTION: float = 0.25

    # Pairing
    MIN_RECOMMENDED_PAIRS: int = 10
    ENUMERATION_MAX_GEOS: int = 12

    model_config = {
        "env_file": ".env",
        "case_sensitive": True,
        "extra": "ignore",
    }

    @field_validator("DESIGN_MAX_TRIM_RATE", "POST_ANALYSIS_MAX_TRIM_RATE")
    def validate_trim_rate(cls, v: float) -> float:
        if not 0 <= v < 0.5:
            raise ValueError("Trim rate must be in [0, 0.5)")
        return v

    @field_validator("DEFAULT_ALPHA", "DEFAULT_BETA")
    def validate_probability(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("Must be strictly between 0 and 1")
        return v


# Utility function: Load a JSON run configuration
def load_run_config(config_path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Failed to load run config {config_path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Run config {config_path} must be a JSON object")
    unknown = set(data) - {"design", "synthetic", "estimate"}
    if unknown:
        raise ConfigError(f"Unknown run config sections: {sorted(unknown)}")
    return data


# Create settings instance
settings = Settings()
