import csv
import io
import json
from pathlib import Path
import re

import numpy as np

from calibreg.errors import SchemaMismatchError
from calibreg.prediction_log import NO_LABEL, PredictionLog
from calibreg.settings import settings


_CSV_HEADER = re.compile(r"^# schema_version=(\d+) n_classes=(\d+)$")


def write_log_csv(log: PredictionLog, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    buffer = io.StringIO()
    buffer.write(f"# schema_version={settings.SCHEMA_VERSION} n_classes={log.n_classes}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow([f"z{k}" for k in range(log.n_classes)] + ["label", "ood"])
    for logits, label, ood in zip(log.logits.tolist(), log.labels.tolist(), log.ood.tolist(), strict=True):
        writer.writerow([*logits, "" if label == NO_LABEL else label, int(ood)])

    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def read_log_csv(path: str | Path) -> PredictionLog:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    match = _CSV_HEADER.match(lines[0]) if lines else None
    if match is None or int(match.group(1)) != settings.SCHEMA_VERSION:
        raise SchemaMismatchError(f"storage: {path} is not a v{settings.SCHEMA_VERSION} prediction log")

    k = int(match.group(2))
    rows = list(csv.reader(lines[2:]))
    if any(len(row) != k + 2 for row in rows):
        raise SchemaMismatchError(f"storage: {path} rows do not have {k} logit columns plus label and ood")

    logits = np.array([[float(v) for v in row[:k]] for row in rows], dtype=np.float64).reshape(len(rows), k)
    labels = np.array([int(row[k]) if row[k] else NO_LABEL for row in rows], dtype=np.int64)
    ood = np.array([row[k + 1] == "1" for row in rows], dtype=bool)
    return PredictionLog(logits=logits, labels=labels, ood=ood)


def write_log_json(log: PredictionLog, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": settings.SCHEMA_VERSION,
        "n_classes": log.n_classes,
        "records": [
            {"logits": logits, "label": None if label == NO_LABEL else label, "ood": ood}
            for logits, label, ood in zip(log.logits.tolist(), log.labels.tolist(), log.ood.tolist(), strict=True)
        ],
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def read_log_json(path: str | Path) -> PredictionLog:
    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("schema_version") != settings.SCHEMA_VERSION:
        raise SchemaMismatchError(f"storage: {path} is not a v{settings.SCHEMA_VERSION} prediction log")

    k = payload["n_classes"]
    records = payload["records"]
    if any(len(r["logits"]) != k for r in records):
        raise SchemaMismatchError(f"storage: {path} records do not carry {k} logits")

    logits = np.array([r["logits"] for r in records], dtype=np.float64).reshape(len(records), k)
    labels = np.array([NO_LABEL if r["label"] is None else r["label"] for r in records], dtype=np.int64)
    ood = np.array([bool(r.get("ood", False)) for r in records], dtype=bool)
    return PredictionLog(logits=logits, labels=labels, ood=ood)


def read_log(path: str | Path) -> PredictionLog:
    path = Path(path)
    if path.suffix == ".json":
        return read_log_json(path)
    return read_log_csv(path)
