"""Environment settings"""
from functools import lru_cache
from typing import Optional

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()


class LabSettings(BaseSettings):
    """Process-level settings read from the environment (or a .env file)"""

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    log_level: str = Field(default="INFO", validation_alias="LOG_LEVEL")
    log_dir: Optional[str] = Field(default=None, validation_alias="LOG_DIR")
    container_env: bool = Field(default=False, validation_alias="CONTAINER_ENV")
    artifact_root: str = Field(
        default="./artifacts",
        validation_alias="REIDLAB_ARTIFACT_ROOT",
        description="Root directory of the flat-file artifact store",
    )
    torch_threads: int = Field(
        default=1,
        ge=1,
        validation_alias="REIDLAB_TORCH_THREADS",
        description="Intra-op threads for torch; 1 keeps CPU reductions bitwise reproducible",
    )


@lru_cache(maxsize=1)
def get_settings() -> LabSettings:
    """Access singleton settings instance"""
    return LabSettings()
