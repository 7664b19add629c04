import csv
import io
from pathlib import Path

from pydantic import BaseModel

from calibreg.models.history import TrainHistory


def write_json(model: BaseModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def write_rows_csv(rows: list[dict], path: str | Path, fieldnames: list[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []

    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def write_models_csv(models: list[BaseModel], path: str | Path) -> Path:
    return write_rows_csv([m.model_dump() for m in models], path)


def write_history_csv(history: TrainHistory, path: str | Path) -> Path:
    return write_models_csv(history.records, path)
