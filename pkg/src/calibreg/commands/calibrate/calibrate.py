from pathlib import Path
from typing import Literal

from loguru import logger
import numpy as np

from calibreg.calibration import apply_temperature, fit_temperature, split_halves
from calibreg.data import Dataset
from calibreg.errors import InvalidArgumentError
from calibreg.models.config import MetricOptions
from calibreg.models.report import RunMetrics, TemperatureFit, TemperatureReport
from calibreg.network import Network
from calibreg.numerics import Rng
from calibreg.prediction_log import PredictionLog
from calibreg.reporting import aggregate, summarize
from calibreg.storage import write_json, write_log_csv
from calibreg.trainer import evaluate


def _fit_and_score(
    fit_log: PredictionLog, eval_log: PredictionLog, options: MetricOptions
) -> tuple[TemperatureFit, RunMetrics, RunMetrics, PredictionLog]:
    fit = fit_temperature(fit_log.logits, fit_log.labels)
    scaled = PredictionLog(logits=apply_temperature(eval_log.logits, fit.tau), labels=eval_log.labels, ood=eval_log.ood)
    return fit, summarize(eval_log, options), summarize(scaled, options), scaled


def calibrate_model(
    net: Network,
    dataset: Dataset,
    options: MetricOptions,
    out_dir: str | Path,
    mode: Literal["holdout", "split-half"] = "split-half",
    holdout: Dataset | None = None,
    seed: int = 0,
) -> TemperatureReport:
    """Fits tau on one split and reports metrics before and after on a disjoint one.

    ``holdout`` mode fits on ``holdout`` and evaluates on ``dataset``. ``split-half`` mode
    halves ``dataset``, runs both directions and averages them.
    """
    out_dir = Path(out_dir)
    log = evaluate(net, dataset)

    if mode == "holdout":
        if holdout is None:
            raise InvalidArgumentError("calibrate: holdout mode needs a holdout dataset")
        fit, before, after, scaled = _fit_and_score(evaluate(net, holdout), log, options)
        write_log_csv(scaled, out_dir / "predictions-scaled.csv")
        report = TemperatureReport(mode=mode, tau=fit.tau, fits=[fit], before=before, after=after)
    else:
        first, second = split_halves(len(log), Rng(seed).fork("split-half"))
        directions = [
            _fit_and_score(log.subset(first), log.subset(second), options),
            _fit_and_score(log.subset(second), log.subset(first), options),
        ]
        fits = [d[0] for d in directions]
        report = TemperatureReport(
            mode=mode,
            tau=float(np.mean([f.tau for f in fits])),
            fits=fits,
            before=aggregate([d[1] for d in directions]),
            after=aggregate([d[2] for d in directions]),
        )

    write_log_csv(log, out_dir / "predictions.csv")
    write_json(report, out_dir / "calibration.json")
    logger.info(
        f"Calibrated ({mode}): tau={report.tau:.4f}, ECE {report.before.ece:.4f} -> {report.after.ece:.4f}, "
        f"NLL {report.before.nll:.4f} -> {report.after.nll:.4f}"
    )
    return report
