import logging
from functools import lru_cache

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()
logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Environment-driven defaults (``ERMFDR_*`` variables or a local ``.env``)."""

    model_config = SettingsConfigDict(env_prefix="ERMFDR_", extra="ignore")

    epsilon: float = Field(1e-10, gt=0)
    max_iters: int = Field(200, ge=1)
    bracket_growth: float = Field(2.0, gt=1)
    max_bracket_expansions: int = Field(120, ge=1)
    gap_tolerance: float = Field(1e-8, gt=0)
    gradient_tolerance: float | None = Field(None, gt=0)
    drift_ceiling: float = Field(1e-3, gt=0)
    workers: int = Field(4, ge=1)
    log_level: str = "INFO"
    output_dir: str = "results"


@lru_cache
def get_settings() -> Settings:
    settings = Settings()
    logger.debug(f"Settings loaded: {settings.model_dump()}")
    return settings
