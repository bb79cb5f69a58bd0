import logging
from pathlib import Path
from typing import Optional
from dotenv import load_dotenv
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables
load_dotenv()

class Settings(BaseSettings):
    """Process-level settings loaded from the environment (prefix LT_)"""
    model_config = SettingsConfigDict(
        env_prefix="LT_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # App settings
    APP_NAME: str = "latent-tree"
    VERSION: str = "0.1.0"

    # Paths
    BASE_DIR: Path = Path(__file__).parent.parent.parent
    DATA_DIR: Path = BASE_DIR / "data"
    CONFIG_DIR: Path = DATA_DIR / "configs"
    OUTPUT_DIR: Path = Field(Path("runs"))

    # Logging settings (LT_LOG selects the level)
    LOG: str = Field("INFO")
    LOG_FORMAT: str = Field("%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s")
    LOG_FILE: Optional[str] = Field(None)

    # Guards
    MAX_DEPTH: int = Field(20)
    VAL_CHUNK_ROWS: int = Field(8192)
    ORACLE_MAX_SIZE: int = Field(200)
    BENCH_ORACLE_CAP: int = Field(2000)
    MIP_MAX_NODES: int = Field(15)

    @field_validator('LOG')
    @classmethod
    def validate_log_level(cls, v):
        valid_levels = ['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL']
        if v.upper() not in valid_levels:
            raise ValueError(f'LOG must be one of {valid_levels}')
        return v.upper()

    @property
    def log_level(self) -> int:
        """Numeric stdlib level for LOG"""
        return getattr(logging, self.LOG)


# Initialize settings instance
settings = Settings()

# Short alias used across the services
Config = settings
