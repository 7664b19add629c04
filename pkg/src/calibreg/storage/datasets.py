import csv
import io
import json
from pathlib import Path

from loguru import logger
import numpy as np

from calibreg.data import Dataset
from calibreg.errors import SchemaMismatchError
from calibreg.models.dataset import DatasetDescriptor, OodSpec
from calibreg.numerics import Matrix
from calibreg.settings import settings


def _header_line(payload: dict) -> str:
    return "# " + json.dumps({"schema_version": settings.SCHEMA_VERSION, **payload}, sort_keys=True) + "\n"


def _read_header(lines: list[str], path: Path) -> dict:
    if not lines or not lines[0].startswith("# "):
        raise SchemaMismatchError(f"storage: {path} has no descriptor header line")
    header = json.loads(lines[0][2:])
    if header.get("schema_version") != settings.SCHEMA_VERSION:
        raise SchemaMismatchError(f"storage: {path} has schema version {header.get('schema_version')}")
    return header


def write_dataset(dataset: Dataset, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    buffer = io.StringIO()
    buffer.write(_header_line({"descriptor": dataset.descriptor.model_dump()}))
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([f"x{j}" for j in range(dataset.n_features)] + ["label"])
    for row, label in zip(dataset.inputs.tolist(), dataset.labels.tolist(), strict=True):
        writer.writerow([*row, label])

    path.write_text(buffer.getvalue(), encoding="utf-8")
    logger.info(f"Wrote {len(dataset)} samples to {path}")
    return path


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    header = _read_header(lines, path)
    descriptor = DatasetDescriptor.model_validate(header["descriptor"])

    rows = list(csv.reader(lines[2:]))
    if not rows:
        raise SchemaMismatchError(f"storage: {path} holds no samples")
    inputs = np.array([[float(v) for v in row[:-1]] for row in rows], dtype=np.float64)
    labels = np.array([int(row[-1]) for row in rows], dtype=np.int64)
    if inputs.shape[1] != descriptor.n_features:
        raise SchemaMismatchError(f"storage: {path} has {inputs.shape[1]} feature columns, descriptor says {descriptor.n_features}")
    return Dataset(inputs=inputs, labels=labels, descriptor=descriptor)


def write_inputs(inputs: Matrix, descriptor: DatasetDescriptor, ood: OodSpec, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    buffer = io.StringIO()
    buffer.write(_header_line({"descriptor": descriptor.model_dump(), "ood": ood.model_dump()}))
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([f"x{j}" for j in range(inputs.shape[1])])
    writer.writerows(inputs.tolist())

    path.write_text(buffer.getvalue(), encoding="utf-8")
    logger.info(f"Wrote {inputs.shape[0]} OOD inputs to {path}")
    return path


def read_inputs(path: str | Path) -> Matrix:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    _read_header(lines, path)
    return np.array([[float(v) for v in row] for row in csv.reader(lines[2:])], dtype=np.float64)
