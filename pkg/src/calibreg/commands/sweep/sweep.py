from pathlib import Path

from loguru import logger
import numpy as np

from calibreg.commands.sweep.utils.grid import expand
from calibreg.commands.train.train import build_report, repeat_tasks
from calibreg.commands.train.utils.runner import RepeatOutcome, run_all
from calibreg.models.config import SweepConfig
from calibreg.models.report import RunResult, SweepPoint, SweepSummary
from calibreg.storage import save_config, write_json, write_rows_csv


METRIC_COLUMNS = [
    "accuracy",
    "nll",
    "ece",
    "ecd",
    "norm_l1",
    "norm_l2",
    "sum_squared_weights",
    "entropy_correct",
    "entropy_misclassified",
    "entropy_ood",
    "nbaucc_misclassification",
    "nbaucc_ood",
]


def _row(point: dict, run: RunResult) -> dict:
    row = {**point, "seed": run.seed, "status": run.status, "validation_accuracy": run.validation_accuracy}
    test = run.test.model_dump() if run.test is not None else {}
    row.update({f"test_{name}": test.get(name) for name in METRIC_COLUMNS})
    row["tau"] = run.temperature.fit.tau if run.temperature is not None else None
    row["target_norm_l2"] = run.temperature.target_norm_l2 if run.temperature is not None else None
    return row


def _mean(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return float(np.mean(present)) if present else None


def _summarize_point(point: dict, directory: Path, runs: list[RunResult]) -> SweepPoint:
    finished = [run for run in runs if run.status != "diverged"]
    return SweepPoint(
        values=point,
        directory=str(directory),
        mean_validation_accuracy=_mean([run.validation_accuracy for run in finished]),
        mean_test_norm_l2=_mean([run.test.norm_l2 for run in finished if run.test is not None]),
        mean_target_norm_l2=_mean([run.temperature.target_norm_l2 for run in finished if run.temperature is not None]),
        statuses=[run.status for run in runs],
    )


def _feasible_decay(summary: SweepSummary) -> None:
    """Records the decay rate whose test norm is closest to the vanilla point's temperature-scaled norm."""
    key = "train.weight_decay"
    if key not in summary.parameters:
        return
    vanilla = next((p for p in summary.points if p.values[key] == 0 and p.mean_target_norm_l2 is not None), None)
    if vanilla is None:
        logger.info("Decay sweep has no temperature-scaled vanilla point; skipping the feasible decay rate")
        return

    candidates = [p for p in summary.points if p.mean_test_norm_l2 is not None]
    closest = min(candidates, key=lambda p: abs(p.mean_test_norm_l2 - vanilla.mean_target_norm_l2))
    summary.calibrated_norm_target = vanilla.mean_target_norm_l2
    summary.feasible_weight_decay = float(closest.values[key])
    logger.info(
        f"Calibrated-norm target {summary.calibrated_norm_target:.4f} is closest to weight_decay="
        f"{summary.feasible_weight_decay}"
    )


def sweep_experiment(sweep: SweepConfig, out_dir: str | Path, jobs: int = 1) -> SweepSummary:
    """Runs every grid point for every repeat, then writes per-point reports, sweep.csv and summary.json."""
    directory = Path(out_dir) / sweep.base.name
    save_config(sweep, directory / "sweep-config.json")

    points = expand(sweep)
    logger.info(f"Sweep '{sweep.base.name}': {len(points)} grid point(s) x {sweep.base.repeats} repeat(s)")

    tasks = []
    for _, config in points:
        tasks.extend(repeat_tasks(config, directory / config.name))
    outcomes = run_all(tasks, jobs=jobs)

    summary = SweepSummary(name=sweep.base.name, parameters=list(sweep.grid))
    rows = []
    for i, (point, config) in enumerate(points):
        chunk: list[RepeatOutcome] = outcomes[i * config.repeats : (i + 1) * config.repeats]
        report = build_report(config, chunk)
        write_json(report, directory / config.name / "report.json")

        runs = [outcome.result for outcome in chunk]
        rows.extend(_row(point, run) for run in runs)
        summary.points.append(_summarize_point(point, directory / config.name, runs))

    scored = [p for p in summary.points if p.mean_validation_accuracy is not None]
    if scored:
        best = max(scored, key=lambda p: p.mean_validation_accuracy)
        summary.selected = best.values
        summary.selected_validation_accuracy = best.mean_validation_accuracy
        logger.info(f"Selected {best.values} (validation accuracy {best.mean_validation_accuracy:.4f})")
    _feasible_decay(summary)

    fieldnames = [*summary.parameters, "seed", "status", "validation_accuracy"]
    fieldnames += [f"test_{name}" for name in METRIC_COLUMNS] + ["tau", "target_norm_l2"]
    write_rows_csv(rows, directory / "sweep.csv", fieldnames=fieldnames)
    write_json(summary, directory / "summary.json")
    return summary
