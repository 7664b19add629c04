"""Directional reproductions at reduced scale; run with ``pytest -m slow``."""

from pathlib import Path

import numpy as np
import pytest

from calibreg import data, metrics
from calibreg.calibration import apply_temperature, fit_temperature
from calibreg.commands.sweep.sweep import sweep_experiment
from calibreg.commands.train.train import train_experiment
from calibreg.models.config import BaselineOptions, ExperimentConfig, RegularizerConfig, SweepConfig, TrainConfig
from calibreg.models.dataset import DatasetDescriptor, OodSpec, SplitSpec
from calibreg.models.report import CalibrationReport, SweepPoint
from calibreg.numerics import Rng
from calibreg.prediction_log import PredictionLog
from calibreg.regularizers import sw1_penalty
from calibreg.trainer import evaluate, fit, train_ensemble


pytestmark = pytest.mark.slow


def blobs_experiment(name: str, n_samples: int = 2000, repeats: int = 3, **train) -> ExperimentConfig:
    options = dict(epochs=10, batch_size=64, lr=0.1, hidden_dims=[64, 64], seed=0) | train
    return ExperimentConfig(
        name=name,
        dataset=DatasetDescriptor(n_classes=10, n_samples=n_samples, seed=0),
        split=SplitSpec(train=0.6, validation=0.2, test=0.2),
        train=TrainConfig(**options),
        ood=OodSpec(n_samples=500),
        repeats=repeats,
    )


def test_decay_sweep_shrinks_function_norm(tmp_path):
    sweep = SweepConfig(base=blobs_experiment("decay"), grid={"train.weight_decay": [0.0, 0.03, 0.3]})
    summary = sweep_experiment(sweep, tmp_path, jobs=3)

    norms = [point.mean_test_norm_l2 for point in summary.points]
    assert norms[0] > norms[1] > norms[2]
    assert summary.feasible_weight_decay in (0.0, 0.03, 0.3)


def test_decay_dominating_updates_collapses_to_trivial_solution(tmp_path):
    config = blobs_experiment("collapse", repeats=1, epochs=12, weight_decay=0.5, clip_norm=1e-9)
    report = train_experiment(config, tmp_path)
    assert report.trivial_solution
    assert report.runs[0].status == "collapsed"


def test_temperature_scaling_reduces_overconfidence(tmp_path):
    config = blobs_experiment("overfit", n_samples=1000, epochs=40, hidden_dims=[128, 128])
    report = train_experiment(config, tmp_path, jobs=3)

    before = [run.temperature.before for run in report.runs]
    after = [run.temperature.after for run in report.runs]
    assert np.median([m.ece for m in after]) < np.median([m.ece for m in before])
    assert [m.accuracy for m in after] == [m.accuracy for m in before]


def test_scaled_model_is_calibrated_against_the_true_posterior():
    descriptor = DatasetDescriptor(n_classes=10, n_samples=14000, seed=4)
    train_set, val_set, test_set = data.split(data.generate(descriptor), SplitSpec(train=0.2, validation=0.1, test=0.7))
    net, _ = fit(TrainConfig(epochs=15, batch_size=64, lr=0.1, hidden_dims=[64, 64], seed=1), train_set, val_set, test_set)

    val_log = evaluate(net, val_set)
    tau = fit_temperature(val_log.logits, val_log.labels).tau

    labels = data.sample_labels_from_posterior(descriptor, test_set.inputs, Rng(11))
    scaled = PredictionLog.from_logits(apply_temperature(evaluate(net, test_set).logits, tau), labels)
    assert metrics.ece(scaled) < 0.05


def test_norm_penalty_raises_ood_entropy(tmp_path):
    vanilla = train_experiment(blobs_experiment("vanilla"), tmp_path, jobs=3)
    penalty = RegularizerConfig(kind="l2_norm_squared", coefficient=0.03)
    regularized = train_experiment(blobs_experiment("l2", regularizer=penalty), tmp_path, jobs=3)

    assert regularized.tag == "l2_norm_squared"
    assert np.median([r.test.entropy_ood for r in regularized.runs]) > np.median([r.test.entropy_ood for r in vanilla.runs])
    assert regularized.mean.norm_l2 < vanilla.mean.norm_l2


def test_function_norm_estimate_transfers_to_unseen_samples():
    descriptor = DatasetDescriptor(n_classes=10, n_samples=6000, seed=2)
    splits = data.split(data.generate(descriptor), SplitSpec(train=0.5, validation=0.1, test=0.4))

    gaps = []
    for seed in range(3):
        _, history = fit(TrainConfig(epochs=20, batch_size=64, hidden_dims=[64, 64], seed=seed), *splits)
        final = history.final
        gaps.append(abs(final.train_norm_l2 - final.test_norm_l2) / final.train_norm_l2)
        assert final.test_nll > final.train_nll
    assert np.median(gaps) < 0.1


def test_ensemble_and_mc_dropout_baselines_join_the_report(tmp_path):
    config = blobs_experiment("baselines", n_samples=1000, repeats=1, epochs=5)
    config = config.model_copy(
        update={"baselines": BaselineOptions(ensemble_members=2, mc_dropout_samples=20, mc_dropout_rates=[0.1, 0.3])}
    )
    report = train_experiment(config, tmp_path)

    assert report.mean_ensemble is not None and report.mean_mc_dropout is not None
    assert report.mean_ensemble.entropy_ood is not None
    assert report.runs[0].mc_dropout_rate in (0.1, 0.3)


OVERFIT = dict(n_samples=1000, epochs=40, hidden_dims=[128, 128])


def point_report(point: SweepPoint) -> CalibrationReport:
    return CalibrationReport.model_validate_json((Path(point.directory) / "report.json").read_text())


def test_sw1_estimate_shrinks_with_more_samples():
    medians = []
    for m in (100, 1_000, 10_000):
        values = [sw1_penalty(Rng(seed).normal((m, 4)), 64, rng=Rng(1000 + seed)).value for seed in range(20)]
        medians.append(np.median(values))
    assert medians[0] > medians[1] > medians[2]


@pytest.mark.parametrize("kind", ["l1_norm", "sw1", "per"])
def test_logit_penalty_at_selected_coefficient_beats_vanilla(kind, tmp_path):
    vanilla = train_experiment(blobs_experiment("vanilla", **OVERFIT), tmp_path, jobs=3)
    base = blobs_experiment(kind, regularizer=RegularizerConfig(kind=kind, coefficient=0.1), **OVERFIT)
    sweep = SweepConfig(base=base, grid={"train.regularizer.coefficient": "default"})
    summary = sweep_experiment(sweep, tmp_path, jobs=3)

    selected = point_report(next(p for p in summary.points if p.values == summary.selected))
    assert selected.mean.norm_l2 <= 0.8 * vanilla.mean.norm_l2
    assert selected.mean.ece < vanilla.mean.ece
    assert abs(selected.mean.accuracy - vanilla.mean.accuracy) <= 0.02


def test_best_regularized_model_detects_ood_better_than_vanilla(tmp_path):
    vanilla = train_experiment(blobs_experiment("vanilla", **OVERFIT), tmp_path, jobs=3)
    base = blobs_experiment("l2", regularizer=RegularizerConfig(kind="l2_norm_squared", coefficient=0.01), **OVERFIT)
    sweep = SweepConfig(base=base, grid={"train.regularizer.coefficient": "default"})
    summary = sweep_experiment(sweep, tmp_path, jobs=3)

    best = max(point_report(p).mean.nbaucc_ood for p in summary.points)
    assert best > vanilla.mean.nbaucc_ood


def test_nll_and_ece_trace_a_u_over_decay_rates(tmp_path):
    grid = {"train.weight_decay": [0.0, 0.003, 0.03, 0.3]}
    sweep = SweepConfig(base=blobs_experiment("decay-u", **OVERFIT), grid=grid)
    summary = sweep_experiment(sweep, tmp_path, jobs=3)
    reports = [point_report(p) for p in summary.points]

    for metric in ("nll", "ece"):
        values = [getattr(r.mean, metric) for r in reports]
        assert min(values[1:-1]) < min(values[0], values[-1]), f"{metric}: {values}"


def test_ensemble_nll_does_not_exceed_the_median_member():
    descriptor = DatasetDescriptor(n_classes=10, n_samples=2000, seed=0)
    splits = data.split(data.generate(descriptor), SplitSpec(train=0.6, validation=0.2, test=0.2))
    test_set = splits[2]

    for seed in range(3):
        config = TrainConfig(epochs=10, batch_size=64, lr=0.1, hidden_dims=[64, 64], seed=seed)
        ensemble = train_ensemble(config, *splits, n_members=5, jobs=5)
        member_nlls = [metrics.nll(evaluate(net, test_set)) for net in ensemble.members]
        assert metrics.nll(evaluate(ensemble, test_set)) <= np.median(member_nlls)


def test_train_nll_falls_across_early_stop_points():
    descriptor = DatasetDescriptor(n_classes=10, n_samples=2000, seed=0)
    splits = data.split(data.generate(descriptor), SplitSpec(train=0.6, validation=0.2, test=0.2))
    config = TrainConfig(epochs=20, batch_size=64, lr=0.1, hidden_dims=[64, 64], lr_schedule=[(10, 0.1)])

    medians = []
    for stop in (2, 5, 10, 20):
        variant = config.model_copy(update={"stop_epoch": stop})
        nlls = [fit(variant.model_copy(update={"seed": seed}), *splits)[1].final.train_nll for seed in range(3)]
        medians.append(np.median(nlls))
    assert all(later <= earlier for earlier, later in zip(medians, medians[1:]))
