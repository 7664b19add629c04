import json
from pathlib import Path

from loguru import logger
import numpy as np

from calibreg.errors import SchemaMismatchError
from calibreg.network import DenseLayer, Network
from calibreg.settings import settings


NETWORK_FORMAT = "calibreg-network"


def network_to_dict(net: Network) -> dict:
    return {
        "format": NETWORK_FORMAT,
        "schema_version": settings.SCHEMA_VERSION,
        "activation": net.activation,
        "dropout_rate": net.dropout_rate,
        "layers": [
            {"in_dim": layer.in_dim, "out_dim": layer.out_dim, "weight": layer.weight.tolist(), "bias": layer.bias.tolist()}
            for layer in net.layers
        ],
    }


def network_from_dict(payload: dict) -> Network:
    if payload.get("format") != NETWORK_FORMAT or payload.get("schema_version") != settings.SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"storage: expected {NETWORK_FORMAT} v{settings.SCHEMA_VERSION}, "
            f"got {payload.get('format')} v{payload.get('schema_version')}"
        )

    layers = []
    for spec in payload["layers"]:
        weight = np.array(spec["weight"], dtype=np.float64).reshape(spec["in_dim"], spec["out_dim"])
        layers.append(DenseLayer(weight=weight, bias=np.array(spec["bias"], dtype=np.float64)))
    return Network(layers=layers, activation=payload["activation"], dropout_rate=payload["dropout_rate"])


def save_network(net: Network, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(network_to_dict(net)), encoding="utf-8")
    logger.info(f"Saved network {net.dims} to {path}")
    return path


def load_network(path: str | Path) -> Network:
    path = Path(path)
    net = network_from_dict(json.loads(path.read_text(encoding="utf-8")))
    logger.info(f"Loaded network {net.dims} from {path}")
    return net
