"""SGD-with-momentum training of ``Network`` under NLL + lambda * penalty.

Each step runs, in order: forward, loss and penalty gradients into the logits, backward,
global-norm clipping, decoupled weight decay, momentum update.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NoReturn

from loguru import logger
import numpy as np
from numpy.typing import ArrayLike, NDArray

from calibreg import metrics
from calibreg.data import Dataset
from calibreg.errors import DimensionMismatchError, InvalidArgumentError, TrainingDivergedError
from calibreg.models.config import TrainConfig
from calibreg.models.history import EpochRecord, TrainHistory
from calibreg.network import Network, backward, forward, init_network, nll_loss, predict_logits, predict_mc_dropout, softmax
from calibreg.numerics import Matrix, Rng, derive_seed
from calibreg.prediction_log import PredictionLog
from calibreg.regularizers import ProjectionSource, decoupled_weight_decay_step, penalty
from calibreg.settings import settings


@dataclass
class Ensemble:
    members: list[Network]

    def __post_init__(self):
        if len(self.members) < 2:
            raise InvalidArgumentError(f"trainer: an ensemble needs at least 2 members, got {len(self.members)}")

    @property
    def in_dim(self) -> int:
        return self.members[0].in_dim

    def predict_proba(self, inputs: ArrayLike) -> Matrix:
        return np.mean([softmax(predict_logits(net, inputs)) for net in self.members], axis=0)


@dataclass
class MCDropoutModel:
    net: Network
    n_samples: int = settings.MC_DROPOUT_SAMPLES
    seed: int = 0

    @property
    def in_dim(self) -> int:
        return self.net.in_dim

    def predict_proba(self, inputs: ArrayLike) -> Matrix:
        return predict_mc_dropout(self.net, inputs, self.n_samples, Rng(self.seed).fork("mc-dropout"))


Model = Network | Ensemble | MCDropoutModel


def learning_rate(config: TrainConfig, epoch: int, step: int, steps_per_epoch: int) -> float:
    """Learning rate at a 0-based (epoch, step): schedule factors, then linear warm-up from lr/10."""
    lr = config.effective_lr
    for boundary, factor in config.lr_schedule:
        if epoch >= boundary:
            lr *= factor

    if epoch < config.warmup_epochs:
        progress = (epoch * steps_per_epoch + step + 1) / (config.warmup_epochs * steps_per_epoch)
        lr *= 0.1 + 0.9 * progress
    return lr


def clip_gradients(grads: list[NDArray[np.float64]], clip_norm: float | None) -> tuple[list[NDArray[np.float64]], float]:
    norm = float(np.sqrt(sum(np.sum(g**2) for g in grads)))
    if clip_norm is None or norm <= clip_norm:
        return grads, norm
    scale = clip_norm / norm
    return [g * scale for g in grads], norm


def _check_datasets(*datasets: Dataset) -> None:
    if any(len(ds) == 0 for ds in datasets):
        raise InvalidArgumentError("trainer: datasets must be nonempty")
    widths = {ds.n_features for ds in datasets}
    if len(widths) != 1:
        raise DimensionMismatchError(f"trainer: datasets disagree on input width: {sorted(widths)}")


def _diverge(history: TrainHistory, epoch: int, message: str) -> NoReturn:
    history.status = "diverged"
    history.diverged_epoch = epoch + 1
    logger.error(message)
    raise TrainingDivergedError(epoch + 1, history)


def _epoch_record(
    epoch: int, lr: float, train_loss: float, net: Network, train_eval: Dataset, test_eval: Dataset
) -> EpochRecord:
    train_logits = predict_logits(net, train_eval.inputs)
    test_logits = predict_logits(net, test_eval.inputs)
    train_log = PredictionLog.from_logits(train_logits, train_eval.labels)
    test_log = PredictionLog.from_logits(test_logits, test_eval.labels)

    return EpochRecord(
        epoch=epoch,
        lr=lr,
        train_loss=train_loss,
        train_nll=metrics.nll(train_log),
        test_nll=metrics.nll(test_log),
        train_accuracy=metrics.accuracy(train_log),
        test_accuracy=metrics.accuracy(test_log),
        train_norm_l2=metrics.function_lp_norm(train_logits, 2),
        test_norm_l2=metrics.function_lp_norm(test_logits, 2),
        test_max_log_prob=float(test_log.log_probabilities.max(axis=1).mean()),
        test_ece=metrics.ece(test_log, settings.DEFAULT_BINS),
        test_ecd=metrics.ecd(test_log, settings.DEFAULT_BINS),
        sum_squared_weights=net.sum_squared_weights(),
    )


def train(config: TrainConfig, train_set: Dataset, val_set: Dataset, test_set: Dataset) -> tuple[Network, TrainHistory]:
    _check_datasets(train_set, val_set, test_set)
    n_classes = int(max(train_set.descriptor.n_classes, train_set.labels.max() + 1))

    root = Rng(config.seed)
    shuffle_rng = root.fork("shuffle")
    dropout_rng = root.fork("dropout")
    projections = None
    if config.regularizer.kind in ("sw1", "per"):
        projections = ProjectionSource(n_classes, config.regularizer, root.fork("projections"))

    net = init_network(
        [train_set.n_features, *config.hidden_dims, n_classes],
        root.fork("init"),
        activation=config.activation,
        dropout_rate=config.dropout_rate,
    )
    velocity = [np.zeros_like(p) for p in net.parameters()]

    train_eval = train_set.head(config.eval_subset_size)
    test_eval = test_set.head(config.eval_subset_size)
    history = TrainHistory()
    n = len(train_set)
    steps_per_epoch = -(-n // config.batch_size)
    reg = config.regularizer

    logger.info(
        f"Training {net.dims} for {config.epochs} epochs: regularizer={reg.kind} (lambda={reg.coefficient}), "
        f"weight_decay={config.weight_decay}, seed={config.seed}"
    )

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        lr = config.effective_lr

        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            logits, trace = forward(net, train_set.inputs[idx], mode="train", rng=dropout_rng)
            loss, dlogits = nll_loss(logits, train_set.labels[idx])
            if not (np.isfinite(loss) and np.all(np.isfinite(logits))):
                _diverge(history, epoch, f"Loss became non-finite at epoch {epoch + 1}, step {step}")

            if reg.active:
                pen = penalty(reg, logits, projections)
                loss += reg.coefficient * pen.value
                dlogits = dlogits + reg.coefficient * pen.dlogits
                if not np.isfinite(loss):
                    _diverge(history, epoch, f"Penalty became non-finite at epoch {epoch + 1}, step {step}")
            loss_sum += loss * len(idx)

            layer_grads = backward(net, trace, dlogits)
            grads = [g for lg in layer_grads for g in (lg.weight, lg.bias)]
            grads, _ = clip_gradients(grads, config.clip_norm)

            lr = learning_rate(config, epoch, step, steps_per_epoch)
            net = decoupled_weight_decay_step(net, config.weight_decay, lr)

            params = net.parameters()
            velocity = [config.momentum * v + g for v, g in zip(velocity, grads, strict=True)]
            net = net.with_parameters([p - lr * v for p, v in zip(params, velocity, strict=True)])

        if not all(np.all(np.isfinite(p)) for p in net.parameters()):
            _diverge(history, epoch, f"Parameters became non-finite at epoch {epoch + 1}")

        record = _epoch_record(epoch + 1, lr, loss_sum / n, net, train_eval, test_eval)
        history.records.append(record)
        logger.debug(
            f"Epoch {record.epoch}: train NLL {record.train_nll:.4f}, test NLL {record.test_nll:.4f}, "
            f"test acc {record.test_accuracy:.4f}, test ||f||_2 {record.test_norm_l2:.4f}"
        )

        first_norm = history.records[0].test_norm_l2
        if history.collapsed_epoch is None and record.test_norm_l2 < settings.COLLAPSE_RATIO * first_norm:
            history.collapsed_epoch = record.epoch
            logger.warning(f"Function norm collapsed at epoch {record.epoch} (||f||_2 = {record.test_norm_l2:.3g})")

    final = history.records[-1]
    if final.test_norm_l2 < settings.COLLAPSE_RATIO * history.records[0].test_norm_l2:
        history.status = "collapsed"

    logger.info(
        f"Finished training ({history.status}): test acc {final.test_accuracy:.4f}, test NLL {final.test_nll:.4f}, "
        f"test ECE {final.test_ece:.4f}"
    )
    return net, history


def compress_schedule(schedule: list[tuple[int, float]], epochs: int, stop_epoch: int) -> list[tuple[int, float]]:
    merged: dict[int, float] = {}
    for boundary, factor in schedule:
        scaled = int(round(boundary * stop_epoch / epochs))
        merged[scaled] = merged.get(scaled, 1.0) * factor
    return sorted(merged.items())


def early_stop_variant(
    config: TrainConfig, stop_epoch: int, train_set: Dataset, val_set: Dataset, test_set: Dataset
) -> tuple[Network, TrainHistory]:
    """Train for ``stop_epoch`` epochs with the decay schedule compressed by ``stop_epoch / epochs``."""
    if not 1 <= stop_epoch <= config.epochs:
        raise InvalidArgumentError(f"trainer: stop_epoch must lie in [1, {config.epochs}], got {stop_epoch}")

    variant = config.model_copy(
        update={
            "epochs": stop_epoch,
            "stop_epoch": None,
            "lr_schedule": compress_schedule(config.lr_schedule, config.epochs, stop_epoch),
        }
    )
    logger.info(f"Early-stopping variant: {stop_epoch}/{config.epochs} epochs, schedule {variant.lr_schedule}")
    return train(variant, train_set, val_set, test_set)


def fit(config: TrainConfig, train_set: Dataset, val_set: Dataset, test_set: Dataset) -> tuple[Network, TrainHistory]:
    if config.stop_epoch is not None:
        return early_stop_variant(config, config.stop_epoch, train_set, val_set, test_set)
    return train(config, train_set, val_set, test_set)


def member_config(config: TrainConfig, index: int) -> TrainConfig:
    return config.model_copy(update={"seed": derive_seed(config.seed, f"member-{index}")})


def _train_member(args: tuple[TrainConfig, Dataset, Dataset, Dataset]) -> Network:
    config, train_set, val_set, test_set = args
    net, _ = fit(config, train_set, val_set, test_set)
    return net


def train_ensemble(
    config: TrainConfig, train_set: Dataset, val_set: Dataset, test_set: Dataset, n_members: int, jobs: int = 1
) -> Ensemble:
    if n_members < 2:
        raise InvalidArgumentError(f"trainer: an ensemble needs at least 2 members, got {n_members}")

    tasks = [(member_config(config, i), train_set, val_set, test_set) for i in range(n_members)]
    logger.info(f"Training a {n_members}-member ensemble with {jobs} job(s)")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            members = list(executor.map(_train_member, tasks))
    else:
        members = [_train_member(task) for task in tasks]
    return Ensemble(members=members)


def model_logits(model: Model, inputs: ArrayLike) -> tuple[Matrix, bool]:
    """Logits for ``inputs``; the flag is True when they are log-probabilities of an averaged model."""
    if isinstance(model, Network):
        return predict_logits(model, inputs), False
    probs = model.predict_proba(inputs)
    return np.log(np.clip(probs, np.finfo(np.float64).tiny, None)), True


def evaluate(model: Model, dataset: Dataset, ood_inputs: ArrayLike | None = None) -> PredictionLog:
    if dataset.n_features != model.in_dim:
        raise DimensionMismatchError(f"trainer: model expects {model.in_dim} features, dataset has {dataset.n_features}")

    logits, _ = model_logits(model, dataset.inputs)
    log = PredictionLog.from_logits(logits, dataset.labels)

    if ood_inputs is not None:
        ood_inputs = np.asarray(ood_inputs, dtype=np.float64)
        if ood_inputs.ndim != 2 or ood_inputs.shape[1] != model.in_dim:
            raise DimensionMismatchError(f"trainer: OOD inputs have shape {ood_inputs.shape}")
        ood_logits, _ = model_logits(model, ood_inputs)
        log = log.concat(PredictionLog.from_logits(ood_logits, ood=np.ones(ood_logits.shape[0], dtype=bool)))

    logger.debug(f"Evaluated {len(log)} rows ({int(log.ood.sum())} OOD)")
    return log
