from pathlib import Path

from loguru import logger

from calibreg import metrics
from calibreg.commands.train.utils.runner import RepeatOutcome, RepeatTask, run_all
from calibreg.models.config import ExperimentConfig
from calibreg.models.report import CalibrationReport
from calibreg.reporting import aggregate, config_hash, regularization_tag
from calibreg.storage import save_config, write_json


def repeat_tasks(config: ExperimentConfig, directory: Path) -> list[RepeatTask]:
    return [RepeatTask(config=config, repeat=r, directory=directory / f"run-{r}") for r in range(config.repeats)]


def build_report(config: ExperimentConfig, outcomes: list[RepeatOutcome]) -> CalibrationReport:
    runs = [outcome.result for outcome in outcomes]
    finished = [run for run in runs if run.status != "diverged"]

    report = CalibrationReport(
        name=config.name,
        tag=regularization_tag(config.train),
        config_hash=config_hash(config),
        runs=runs,
        mean=aggregate([run.test for run in finished if run.test is not None]),
        mean_after_temperature=aggregate([run.temperature.after for run in finished if run.temperature is not None]),
        mean_ensemble=aggregate([run.ensemble for run in finished if run.ensemble is not None]),
        mean_mc_dropout=aggregate([run.mc_dropout for run in finished if run.mc_dropout is not None]),
        trivial_solution=any(run.status == "collapsed" for run in runs),
    )

    first_log = next((outcome.test_log for outcome in outcomes if outcome.test_log is not None), None)
    if first_log is not None:
        labeled = first_log.subset(~first_log.ood & first_log.has_label)
        report.reliability = metrics.reliability_curve(labeled, config.metrics.bins)
        report.entropy_histogram = metrics.entropy_histogram(first_log, config.metrics.entropy_bins)
    return report


def train_experiment(config: ExperimentConfig, out_dir: str | Path, jobs: int = 1) -> CalibrationReport:
    directory = Path(out_dir) / config.name
    save_config(config, directory / "config.json")

    outcomes = run_all(repeat_tasks(config, directory), jobs=jobs)
    report = build_report(config, outcomes)
    write_json(report, directory / "report.json")

    statuses = [run.status for run in report.runs]
    logger.info(f"[{config.name}] {len(statuses)} run(s) finished: {statuses}; report at {directory / 'report.json'}")
    if report.trivial_solution:
        logger.warning(f"[{config.name}] at least one run collapsed to the trivial solution")
    return report
