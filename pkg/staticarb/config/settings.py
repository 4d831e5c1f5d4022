"""
Configuration settings for the staticarb toolkit.
"""
from typing import Optional, Tuple, Type

from pydantic import Field
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict


class Settings(BaseSettings):
    """Numerical tolerances, solver options and logging settings.

    Values come from constructor arguments only (the CLI builds one from its
    flags), so a report can always be reproduced from the command line that
    produced it.
    """

    model_config = SettingsConfigDict(frozen=True, extra="forbid")

    # Application
    app_name: str = "staticarb"
    app_version: str = "0.3.0"

    # Normalization
    spread_floor: float = Field(default=1e-8, gt=0)
    strike_dedup_tolerance: float = Field(default=1e-12, ge=0)
    expiry_match_tolerance: float = Field(default=1e-12, ge=0)

    # Constraint system
    detection_tolerance: float = Field(default=1e-9, ge=0)
    strike_match_tolerance: float = Field(default=1e-9, ge=0)
    oracle_tolerance: float = Field(default=1e-7, ge=0)

    # Repair
    zero_tolerance: float = Field(default=1e-7, ge=0)

    # LP solver
    solver_feas_tol: float = Field(default=1e-9, gt=0)
    solver_opt_tol: float = Field(default=1e-9, gt=0)
    solver_max_iters_factor: int = Field(default=50, ge=1)
    solver_stall_limit: int = Field(default=50, ge=1)  # degenerate pivots before Bland's rule
    solver_refactor_interval: int = Field(default=64, ge=1)
    solver_form: str = Field(default="auto", pattern="^(auto|standard|dual)$")

    # Output
    output_significant_digits: int = Field(default=12, ge=1, le=17)

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    # Batch
    default_jobs: int = Field(default=1, ge=1)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        # flags only: no environment variables, no .env files
        return (init_settings,)


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get the global settings instance."""
    return settings
