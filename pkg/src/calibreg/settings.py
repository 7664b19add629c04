from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore", env_prefix="CALIBREG_")

    OUT: str | None = None
    DEFAULT_OUT_DIR: str = "runs"
    LOG_LEVEL: str = "INFO"

    SCHEMA_VERSION: int = 1

    DEFAULT_BINS: int = 15
    NBAUCC_TAU: float = 0.5
    NBAUCC_STEPS: int = 50
    PROBABILITY_EPS: float = 1e-7
    ENTROPY_HISTOGRAM_BINS: int = 20

    N_PROJECTIONS: int = 256

    EVAL_SUBSET_SIZE: int = 2000
    COLLAPSE_RATIO: float = 0.01
    REFERENCE_BATCH_SIZE: int = 128

    TEMPERATURE_LOWER: float = 0.05
    TEMPERATURE_UPPER: float = 20.0
    TEMPERATURE_GRID_SIZE: int = 61
    TEMPERATURE_TOL: float = 1e-4

    MC_DROPOUT_SAMPLES: int = 100
    ENSEMBLE_MEMBERS: int = 5


settings = Settings()
