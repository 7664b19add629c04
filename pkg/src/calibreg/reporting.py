import hashlib

from loguru import logger
import numpy as np
from pydantic import BaseModel

from calibreg import metrics
from calibreg.calibration import apply_temperature, fit_temperature
from calibreg.models.config import MetricOptions, TrainConfig
from calibreg.models.report import RunMetrics, TemperatureComparison
from calibreg.network import Network
from calibreg.prediction_log import PredictionLog


def config_hash(config: BaseModel) -> str:
    return hashlib.sha256(config.model_dump_json().encode()).hexdigest()[:16]


def regularization_tag(config: TrainConfig) -> str:
    if config.regularizer.active:
        return config.regularizer.kind
    if config.weight_decay > 0:
        return "weight_decay"
    return "vanilla"


def summarize(log: PredictionLog, options: MetricOptions, net: Network | None = None) -> RunMetrics:
    """Test-time metrics of a mixed log: accuracy-type metrics on labeled in-distribution rows, detection on all."""
    in_dist = log.subset(~log.ood & log.has_label)
    groups = metrics.entropy_groups(log)

    nbaucc_ood = None
    if log.ood.any():
        nbaucc_ood = metrics.nbaucc(log, ~log.ood, options.nbaucc_tau, options.nbaucc_steps)

    return RunMetrics(
        accuracy=metrics.accuracy(in_dist),
        nll=metrics.nll(in_dist),
        ece=metrics.ece(in_dist, options.bins),
        ecd=metrics.ecd(in_dist, options.bins),
        norm_l1=metrics.function_lp_norm(in_dist.logits, 1),
        norm_l2=metrics.function_lp_norm(in_dist.logits, 2),
        sum_squared_weights=net.sum_squared_weights() if net is not None else None,
        entropy_correct=metrics.mean_entropy(log, groups["correct"]),
        entropy_misclassified=metrics.mean_entropy(log, groups["misclassified"]),
        entropy_ood=metrics.mean_entropy(log, groups["ood"]),
        nbaucc_misclassification=metrics.nbaucc(in_dist, in_dist.correct, options.nbaucc_tau, options.nbaucc_steps),
        nbaucc_ood=nbaucc_ood,
    )


def temperature_comparison(
    validation_log: PredictionLog, test_log: PredictionLog, options: MetricOptions, net: Network | None = None
) -> TemperatureComparison:
    """Fit tau on the validation log, then report the test log before and after scaling."""
    fit = fit_temperature(validation_log.logits, validation_log.labels)
    scaled = PredictionLog(logits=apply_temperature(test_log.logits, fit.tau), labels=test_log.labels, ood=test_log.ood)

    before = summarize(test_log, options, net)
    after = summarize(scaled, options, net)
    logger.info(f"Temperature scaling (tau={fit.tau:.3f}): test ECE {before.ece:.4f} -> {after.ece:.4f}")
    return TemperatureComparison(fit=fit, before=before, after=after, target_norm_l2=after.norm_l2)


def aggregate(runs: list[RunMetrics]) -> RunMetrics | None:
    """Field-wise mean; optional fields average over the runs that report them."""
    if not runs:
        return None

    values = {}
    for name in RunMetrics.model_fields:
        present = [getattr(run, name) for run in runs if getattr(run, name) is not None]
        values[name] = float(np.mean(present)) if present else None
    return RunMetrics(**values)
