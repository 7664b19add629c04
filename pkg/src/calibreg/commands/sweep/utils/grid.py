import itertools
from typing import Any

from calibreg.errors import InvalidArgumentError
from calibreg.models.config import DEFAULT_COEFFICIENT_GRIDS, ExperimentConfig, SweepConfig


COEFFICIENT_PATH = "train.regularizer.coefficient"


def set_path(tree: dict, dotted: str, value: Any) -> None:
    """Sets ``tree[a][b][c] = value`` for ``dotted = "a.b.c"``; the path must already exist."""
    *parents, leaf = dotted.split(".")
    node = tree
    for key in parents:
        child = node.get(key)
        if not isinstance(child, dict):
            raise InvalidArgumentError(f"sweep: '{dotted}' does not address a config field")
        node = child
    if leaf not in node:
        raise InvalidArgumentError(f"sweep: '{dotted}' does not address a config field")
    node[leaf] = value


def grid_values(sweep: SweepConfig) -> dict[str, list[Any]]:
    values = {}
    for key, options in sweep.grid.items():
        if options == "default":
            options = DEFAULT_COEFFICIENT_GRIDS[sweep.base.train.regularizer.kind]
        values[key] = list(options)
    return values


def point_slug(point: dict[str, Any]) -> str:
    return "_".join(f"{key.rsplit('.', 1)[-1]}={value}" for key, value in point.items())


def expand(sweep: SweepConfig) -> list[tuple[dict[str, Any], ExperimentConfig]]:
    """Cartesian product of the grid in declaration order, each point as a validated config."""
    values = grid_values(sweep)
    keys = list(values)
    points = []
    for combo in itertools.product(*(values[key] for key in keys)):
        point = dict(zip(keys, combo, strict=True))
        tree = sweep.base.model_dump()
        for key, value in point.items():
            set_path(tree, key, value)
        tree["name"] = point_slug(point)
        points.append((point, ExperimentConfig.model_validate(tree)))
    return points
