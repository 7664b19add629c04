from pathlib import Path
from typing import TypeVar

from loguru import logger
from pydantic import BaseModel

from calibreg.models.config import ExperimentConfig, SweepConfig


ConfigT = TypeVar("ConfigT", bound=BaseModel)


def load_config(path: str | Path, model: type[ConfigT]) -> ConfigT:
    path = Path(path)
    config = model.model_validate_json(path.read_text(encoding="utf-8"))
    logger.info(f"Loaded {model.__name__} from {path}")
    return config


def load_experiment(path: str | Path) -> ExperimentConfig:
    return load_config(path, ExperimentConfig)


def load_sweep(path: str | Path) -> SweepConfig:
    return load_config(path, SweepConfig)


def save_config(config: BaseModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path
