"""Calibration and uncertainty measurements over a ``PredictionLog``.

Metrics return raw fractions in [0, 1]; scaling by 100 happens only when reports are
rendered for people.
"""

from loguru import logger
import numpy as np
from numpy.typing import ArrayLike, NDArray

from calibreg.errors import DimensionMismatchError, EmptyLogError, InvalidArgumentError, MissingLabelsError
from calibreg.models.report import ConfidenceBin, EntropyHistogramRow, ReliabilityRow
from calibreg.numerics import as_matrix
from calibreg.prediction_log import PredictionLog
from calibreg.settings import settings


def _require_labels(log: PredictionLog) -> None:
    if len(log) == 0:
        raise EmptyLogError("metrics: prediction log is empty")
    if not np.all(log.has_label):
        raise MissingLabelsError(f"metrics: {int((~log.has_label).sum())} rows have no label")


def _check_bins(n_bins: int) -> None:
    if n_bins < 1:
        raise InvalidArgumentError(f"metrics: need at least one bin, got {n_bins}")


def bin_indices(confidence: NDArray[np.float64], n_bins: int) -> NDArray[np.int64]:
    """Bin i holds confidences in (i/M, (i+1)/M]; a confidence of exactly i/M falls in bin i - 1."""
    edges = np.arange(n_bins + 1) / n_bins
    return np.clip(np.searchsorted(edges, confidence, side="left") - 1, 0, n_bins - 1)


def confidence_bins(log: PredictionLog, n_bins: int = settings.DEFAULT_BINS) -> list[ConfidenceBin]:
    _check_bins(n_bins)
    _require_labels(log)

    confidence = log.confidence
    correct = log.correct.astype(np.float64)
    index = bin_indices(confidence, n_bins)

    counts = np.bincount(index, minlength=n_bins)
    acc_sum = np.bincount(index, weights=correct, minlength=n_bins)
    conf_sum = np.bincount(index, weights=confidence, minlength=n_bins)

    bins = []
    for i in range(n_bins):
        count = int(counts[i])
        bins.append(
            ConfidenceBin(
                lower=i / n_bins,
                upper=(i + 1) / n_bins,
                count=count,
                mean_accuracy=float(acc_sum[i] / count) if count else 0.0,
                mean_confidence=float(min(conf_sum[i] / count, 1.0)) if count else 0.0,
            )
        )
    return bins


def ece(log: PredictionLog, n_bins: int = settings.DEFAULT_BINS) -> float:
    bins = confidence_bins(log, n_bins)
    n = len(log)
    return float(sum(b.count / n * abs(b.mean_accuracy - b.mean_confidence) for b in bins if b.count))


def binary_cross_entropy(accuracy: ArrayLike, confidence: ArrayLike, eps: float = settings.PROBABILITY_EPS):
    """CE(a || c) = -[a ln c + (1 - a) ln(1 - c)] with c clamped to [eps, 1 - eps]."""
    a = np.asarray(accuracy, dtype=np.float64)
    c = np.clip(np.asarray(confidence, dtype=np.float64), eps, 1.0 - eps)
    return -(a * np.log(c) + (1.0 - a) * np.log1p(-c))


def binary_entropy(accuracy: ArrayLike):
    a = np.asarray(accuracy, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(a > 0, a * np.log(a), 0.0) + np.where(a < 1, (1 - a) * np.log1p(-a), 0.0)
    return -terms


def ecd(log: PredictionLog, n_bins: int = settings.DEFAULT_BINS, eps: float = settings.PROBABILITY_EPS) -> float:
    """Expected calibration divergence: bin-weighted CE(acc || conf) over equal-width confidence bins."""
    bins = confidence_bins(log, n_bins)
    n = len(log)
    return float(
        sum(b.count / n * binary_cross_entropy(b.mean_accuracy, b.mean_confidence, eps) for b in bins if b.count)
    )


def ll_upper_bound(q: ArrayLike, phi: ArrayLike, eps: float = settings.PROBABILITY_EPS) -> float:
    """Upper bound q_m ln phi_m + (1 - q_m) ln(1 - phi_m) on sum_k q_k ln phi_k, with m = argmax phi."""
    q = np.asarray(q, dtype=np.float64).ravel()
    phi = np.asarray(phi, dtype=np.float64).ravel()
    if q.shape != phi.shape:
        raise DimensionMismatchError(f"metrics: q has {q.size} entries, phi has {phi.size}")

    m = int(np.argmax(phi))
    # clamps only ever raise the bound
    return float(q[m] * np.log(max(phi[m], eps)) + (1.0 - q[m]) * np.log(max(1.0 - phi[m], eps)))


def accuracy(log: PredictionLog) -> float:
    _require_labels(log)
    return float(log.correct.mean())


def nll(log: PredictionLog) -> float:
    _require_labels(log)
    rows = np.arange(len(log))
    return -float(np.mean(log.log_probabilities[rows, log.labels]))


def predictive_entropy(log: PredictionLog) -> NDArray[np.float64]:
    probs = log.probabilities
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    return np.clip(-terms.sum(axis=1), 0.0, np.log(log.n_classes))


def function_lp_norm(logits: ArrayLike, p: int = 2) -> float:
    """Monte-Carlo ||f||_p over an evaluation set; p = 2 returns the root, not its square."""
    z = as_matrix(logits, "logits")
    if z.shape[0] < 1:
        raise EmptyLogError("metrics: no logits to estimate a function norm from")
    if p == 1:
        return float(np.abs(z).sum() / z.shape[0])
    if p == 2:
        return float(np.sqrt((z**2).sum() / z.shape[0]))
    raise InvalidArgumentError(f"metrics: unsupported norm order p={p}")


def _aligned_flags(log: PredictionLog, positive_flags: ArrayLike) -> NDArray[np.bool_]:
    flags = np.asarray(positive_flags, dtype=bool)
    if flags.shape != (len(log),):
        raise DimensionMismatchError(f"metrics: {flags.size} flags for a log of {len(log)} rows")
    return flags


def _f1(positive: NDArray[np.bool_], predicted_positive: NDArray[np.bool_]) -> float:
    true_positive = int(np.sum(positive & predicted_positive))
    n_predicted = int(predicted_positive.sum())
    n_positive = int(positive.sum())
    if true_positive == 0 or n_predicted == 0 or n_positive == 0:
        return 0.0
    precision = true_positive / n_predicted
    recall = true_positive / n_positive
    return 2.0 * precision * recall / (precision + recall)


def f1_at_threshold(log: PredictionLog, positive_flags: ArrayLike, t: float) -> float:
    """F1 of the rule 'positive iff confidence > t'; 0 when precision or recall is undefined."""
    flags = _aligned_flags(log, positive_flags)
    return _f1(flags, log.confidence > t)


def nbaucc(
    log: PredictionLog,
    positive_flags: ArrayLike,
    tau: float = settings.NBAUCC_TAU,
    n_steps: int = settings.NBAUCC_STEPS,
) -> float:
    """Mean F1 over the thresholds tau * i / M, i = 1..M."""
    if not 0.0 < tau <= 1.0:
        raise InvalidArgumentError(f"metrics: NBAUCC upper threshold must lie in (0, 1], got {tau}")
    if n_steps < 1:
        raise InvalidArgumentError(f"metrics: NBAUCC needs at least one step, got {n_steps}")

    flags = _aligned_flags(log, positive_flags)
    confidence = log.confidence
    thresholds = tau * np.arange(1, n_steps + 1) / n_steps
    return float(np.mean([_f1(flags, confidence > t) for t in thresholds]))


def reliability_curve(log: PredictionLog, n_bins: int = settings.DEFAULT_BINS) -> list[ReliabilityRow]:
    return [
        ReliabilityRow(
            midpoint=(b.lower + b.upper) / 2.0,
            accuracy=b.mean_accuracy,
            confidence=b.mean_confidence,
            count=b.count,
        )
        for b in confidence_bins(log, n_bins)
    ]


def entropy_groups(log: PredictionLog) -> dict[str, NDArray[np.bool_]]:
    in_dist = ~log.ood & log.has_label
    return {
        "correct": in_dist & log.correct,
        "misclassified": in_dist & ~log.correct,
        "ood": log.ood,
    }


def entropy_histogram(log: PredictionLog, n_bins: int = settings.ENTROPY_HISTOGRAM_BINS) -> list[EntropyHistogramRow]:
    """Per-group entropy densities over equal-width bins spanning [0, ln K]."""
    _check_bins(n_bins)
    entropy = predictive_entropy(log)
    edges = np.linspace(0.0, np.log(log.n_classes), n_bins + 1)

    rows = []
    for group, mask in entropy_groups(log).items():
        if not mask.any():
            logger.debug(f"Entropy group '{group}' is empty, skipping")
            continue
        density, _ = np.histogram(entropy[mask], bins=edges, density=True)
        rows.extend(
            EntropyHistogramRow(group=group, lower=float(lo), upper=float(hi), density=float(d))
            for lo, hi, d in zip(edges[:-1], edges[1:], density, strict=True)
        )
    return rows


def mean_entropy(log: PredictionLog, mask: ArrayLike) -> float | None:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return None
    return float(predictive_entropy(log)[mask].mean())
