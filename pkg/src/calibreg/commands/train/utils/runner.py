from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from loguru import logger

from calibreg import data, metrics
from calibreg.errors import TrainingDivergedError
from calibreg.models.config import ExperimentConfig, TrainConfig
from calibreg.models.report import RunMetrics, RunResult
from calibreg.numerics import Matrix, derive_seed
from calibreg.prediction_log import PredictionLog
from calibreg.reporting import summarize, temperature_comparison
from calibreg.storage import save_network, write_history_csv, write_json, write_log_csv
from calibreg.trainer import MCDropoutModel, evaluate, fit, train_ensemble


@dataclass
class RepeatTask:
    config: ExperimentConfig
    repeat: int
    directory: Path


@dataclass
class RepeatOutcome:
    result: RunResult
    test_log: PredictionLog | None = None


def _ensemble_metrics(
    config: ExperimentConfig,
    train_config: TrainConfig,
    splits: tuple[data.Dataset, data.Dataset, data.Dataset],
    ood_inputs: Matrix | None,
) -> RunMetrics | None:
    n_members = config.baselines.ensemble_members
    if n_members < 2:
        return None
    try:
        ensemble = train_ensemble(train_config, *splits, n_members=n_members)
    except TrainingDivergedError as e:
        logger.warning(f"Skipping ensemble baseline: {e}")
        return None
    return summarize(evaluate(ensemble, splits[2], ood_inputs), config.metrics)


def _mc_dropout_metrics(
    config: ExperimentConfig,
    train_config: TrainConfig,
    splits: tuple[data.Dataset, data.Dataset, data.Dataset],
    ood_inputs: Matrix | None,
) -> tuple[RunMetrics | None, float | None]:
    n_samples = config.baselines.mc_dropout_samples
    if n_samples < 1:
        return None, None

    train_set, val_set, test_set = splits
    best: tuple[float, float, MCDropoutModel] | None = None
    for rate in config.baselines.mc_dropout_rates:
        try:
            net, _ = fit(train_config.model_copy(update={"dropout_rate": rate}), train_set, val_set, test_set)
        except TrainingDivergedError as e:
            logger.warning(f"MC-dropout rate {rate} diverged: {e}")
            continue
        model = MCDropoutModel(net=net, n_samples=n_samples, seed=derive_seed(train_config.seed, "mc-dropout"))
        val_acc = metrics.accuracy(evaluate(model, val_set))
        logger.info(f"MC-dropout rate {rate}: validation accuracy {val_acc:.4f}")
        if best is None or val_acc > best[0]:
            best = (val_acc, rate, model)

    if best is None:
        return None, None
    _, rate, model = best
    return summarize(evaluate(model, test_set, ood_inputs), config.metrics), rate


def run_repeat(task: RepeatTask) -> RepeatOutcome:
    """One seed of the protocol: data, training, evaluation, temperature scaling, baselines, artifacts."""
    config = task.config
    seed = config.train.seed + task.repeat
    train_config = config.train.model_copy(update={"seed": seed})
    directory = task.directory
    logger.info(f"[{config.name}] repeat {task.repeat} (seed {seed}) -> {directory}")

    dataset = data.generate(config.dataset)
    splits = data.split(dataset, config.split)
    train_set, val_set, test_set = splits
    ood_inputs = None
    if config.ood is not None:
        ood_inputs = data.make_ood(
            config.dataset, config.ood.n_samples, mode=config.ood.mode, seed=config.ood.seed, shift=config.ood.shift
        )

    try:
        net, history = fit(train_config, train_set, val_set, test_set)
    except TrainingDivergedError as e:
        logger.error(f"[{config.name}] seed {seed} diverged at epoch {e.epoch}")
        if e.history is not None:
            write_history_csv(e.history, directory / "history.csv")
            write_json(e.history, directory / "history.json")
        return RepeatOutcome(result=RunResult(seed=seed, status="diverged", diverged_epoch=e.epoch))

    save_network(net, directory / "model.json")
    write_history_csv(history, directory / "history.csv")
    write_json(history, directory / "history.json")

    val_log = evaluate(net, val_set)
    test_log = evaluate(net, test_set, ood_inputs)
    write_log_csv(test_log, directory / "predictions.csv")

    temperature = None
    if config.temperature_scaling:
        temperature = temperature_comparison(val_log, test_log, config.metrics, net)

    mc_dropout, mc_rate = _mc_dropout_metrics(config, train_config, splits, ood_inputs)
    result = RunResult(
        seed=seed,
        status=history.status,
        validation_accuracy=metrics.accuracy(val_log),
        test=summarize(test_log, config.metrics, net),
        temperature=temperature,
        ensemble=_ensemble_metrics(config, train_config, splits, ood_inputs),
        mc_dropout=mc_dropout,
        mc_dropout_rate=mc_rate,
    )
    write_json(result, directory / "run.json")
    return RepeatOutcome(result=result, test_log=test_log)


def run_all(tasks: list[RepeatTask], jobs: int = 1) -> list[RepeatOutcome]:
    """Runs tasks in parallel when ``jobs > 1``; outcomes come back in task order."""
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(run_repeat, tasks))
    return [run_repeat(task) for task in tasks]
