import numpy as np
import pytest

from calibreg import metrics
from calibreg.data import make_blobs, split
from calibreg.errors import DecayOvershootError, DimensionMismatchError, InvalidArgumentError, TrainingDivergedError
from calibreg.models.config import RegularizerConfig, TrainConfig
from calibreg.models.dataset import SplitSpec
from calibreg.network import forward
from calibreg.settings import settings
from calibreg.trainer import (
    Ensemble,
    MCDropoutModel,
    clip_gradients,
    compress_schedule,
    early_stop_variant,
    evaluate,
    fit,
    learning_rate,
    train,
    train_ensemble,
)


@pytest.fixture
def splits(blobs):
    return split(blobs, SplitSpec(train=0.6, validation=0.2, test=0.2, seed=0))


def assert_same_network(a, b):
    for p, q in zip(a.parameters(), b.parameters(), strict=True):
        np.testing.assert_array_equal(p, q)


def test_training_is_deterministic(quick_train_config, splits):
    net_a, history_a = train(quick_train_config, *splits)
    net_b, history_b = train(quick_train_config, *splits)
    assert_same_network(net_a, net_b)
    assert history_a == history_b
    assert len(history_a.records) == quick_train_config.epochs


def test_disabled_penalty_matches_plain_training(quick_train_config, splits):
    plain, _ = train(quick_train_config, *splits)
    idle = quick_train_config.model_copy(update={"regularizer": RegularizerConfig(kind="sw1", coefficient=0.0)})
    zero_penalty, _ = train(idle, *splits)
    assert_same_network(plain, zero_penalty)


def test_one_epoch_on_separable_blobs():
    data = make_blobs(n_classes=2, n_samples=600, spread=0.05, seed=1)
    config = TrainConfig(epochs=1, batch_size=16, lr=0.1, hidden_dims=[32], seed=3)
    _, history = train(config, *split(data, SplitSpec(seed=1)))
    assert history.final.train_accuracy >= 0.95


def test_overwhelming_decay_collapses_the_function(quick_train_config, splits):
    config = quick_train_config.model_copy(update={"epochs": 12, "weight_decay": 0.5, "lr": 0.1, "clip_norm": 1e-9})
    _, history = train(config, *splits)
    assert history.status == "collapsed"
    assert history.collapsed_epoch is not None
    assert history.final.test_norm_l2 < 0.01 * history.records[0].test_norm_l2
    assert history.final.sum_squared_weights < history.records[0].sum_squared_weights


def test_l2_norm_penalty_shrinks_the_function(quick_train_config, splits):
    base = quick_train_config.model_copy(update={"epochs": 6})
    penalized = base.model_copy(update={"regularizer": RegularizerConfig(kind="l2_norm_squared", coefficient=0.3)})
    plain_norms, penalized_norms = [], []
    for seed in range(3):
        _, h0 = train(base.model_copy(update={"seed": seed}), *splits)
        _, h1 = train(penalized.model_copy(update={"seed": seed}), *splits)
        plain_norms.append(h0.final.test_norm_l2)
        penalized_norms.append(h1.final.test_norm_l2)
    assert np.median(penalized_norms) < np.median(plain_norms)


@pytest.mark.parametrize("kind", ["l1_norm", "sw1", "per"])
def test_every_penalty_trains(kind, quick_train_config, splits):
    config = quick_train_config.model_copy(
        update={"regularizer": RegularizerConfig(kind=kind, coefficient=0.1, n_projections=16)}
    )
    _, history = train(config, *splits)
    assert history.status == "completed"
    assert all(np.isfinite(r.train_loss) for r in history.records)


def test_non_finite_loss_aborts_with_epoch(mocker, quick_train_config, splits):
    mocker.patch("calibreg.trainer.nll_loss", side_effect=lambda z, y: (float("nan"), np.zeros_like(z)))
    with pytest.raises(TrainingDivergedError) as excinfo:
        train(quick_train_config, *splits)
    assert excinfo.value.epoch == 1
    assert excinfo.value.history.status == "diverged"
    assert "trainer:" in str(excinfo.value)


def nan_forward(net, batch, mode="eval", rng=None):
    logits, trace = forward(net, batch, mode, rng)
    return np.full_like(logits, np.nan), trace


@pytest.mark.parametrize("kind", ["sw1", "per"])
def test_non_finite_logits_under_projection_penalty_abort_as_divergence(kind, mocker, quick_train_config, splits):
    mocker.patch("calibreg.trainer.forward", side_effect=nan_forward)
    config = quick_train_config.model_copy(
        update={"regularizer": RegularizerConfig(kind=kind, coefficient=0.1, n_projections=16)}
    )
    with pytest.raises(TrainingDivergedError) as excinfo:
        train(config, *splits)
    assert excinfo.value.epoch == 1
    assert excinfo.value.history.status == "diverged"
    assert excinfo.value.history.diverged_epoch == 1


def test_decay_overshoot_surfaces(quick_train_config, splits):
    with pytest.raises(DecayOvershootError):
        train(quick_train_config.model_copy(update={"weight_decay": 50.0}), *splits)


def test_learning_rate_schedule_and_warmup():
    config = TrainConfig(lr=0.1, lr_schedule=[(2, 0.1), (4, 0.5)], warmup_epochs=0)
    assert learning_rate(config, 1, 0, 10) == pytest.approx(0.1)
    assert learning_rate(config, 2, 0, 10) == pytest.approx(0.01)
    assert learning_rate(config, 5, 0, 10) == pytest.approx(0.005)

    warm = TrainConfig(lr=0.1, warmup_epochs=2)
    assert learning_rate(warm, 0, 0, 10) == pytest.approx(0.1 * (0.1 + 0.9 / 20))
    assert learning_rate(warm, 1, 9, 10) == pytest.approx(0.1)
    assert learning_rate(warm, 2, 0, 10) == pytest.approx(0.1)


def test_linear_lr_scaling():
    assert TrainConfig(lr=0.1, batch_size=256, lr_scaling="linear").effective_lr == pytest.approx(0.2)
    assert TrainConfig(lr=0.1, batch_size=256).effective_lr == pytest.approx(0.1)


def test_schedule_must_increase():
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule=[(5, 0.1), (5, 0.1)])


def test_clip_gradients_bounds_the_global_norm():
    grads = [np.full((2, 2), 3.0), np.full(3, -4.0)]
    clipped, norm = clip_gradients(grads, 1.0)
    assert norm == pytest.approx(np.sqrt(36 + 48))
    assert np.sqrt(sum(np.sum(g**2) for g in clipped)) <= 1.0 + 1e-9
    untouched, _ = clip_gradients(grads, None)
    assert untouched is grads


def test_compress_schedule():
    assert compress_schedule([(100, 0.1), (150, 0.1)], 200, 100) == [(50, 0.1), (75, 0.1)]
    assert compress_schedule([(1, 0.1), (2, 0.5)], 10, 1) == [(0, pytest.approx(0.05))]


def test_early_stop_variant(quick_train_config, splits):
    full_net, full_history = train(quick_train_config, *splits)
    same_net, same_history = early_stop_variant(quick_train_config, quick_train_config.epochs, *splits)
    assert_same_network(full_net, same_net)
    assert same_history == full_history

    _, short = early_stop_variant(quick_train_config, 1, *splits)
    assert len(short.records) == 1
    with pytest.raises(InvalidArgumentError):
        early_stop_variant(quick_train_config, quick_train_config.epochs + 1, *splits)


def test_fit_honours_stop_epoch(quick_train_config, splits):
    _, history = fit(quick_train_config.model_copy(update={"stop_epoch": 2}), *splits)
    assert len(history.records) == 2


def test_ensemble(quick_train_config, splits):
    with pytest.raises(InvalidArgumentError):
        train_ensemble(quick_train_config, *splits, n_members=1)

    ensemble = train_ensemble(quick_train_config, *splits, n_members=2)
    assert not np.array_equal(ensemble.members[0].layers[0].weight, ensemble.members[1].layers[0].weight)
    probs = ensemble.predict_proba(splits[2].inputs)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)


def test_ensemble_in_parallel_matches_sequential(quick_train_config, splits):
    sequential = train_ensemble(quick_train_config, *splits, n_members=2, jobs=1)
    parallel = train_ensemble(quick_train_config, *splits, n_members=2, jobs=2)
    for a, b in zip(sequential.members, parallel.members, strict=True):
        assert_same_network(a, b)


def test_evaluate_matches_history_and_flags_ood(quick_train_config, splits):
    net, history = train(quick_train_config, *splits)
    test_set = splits[2]
    ood = np.full((7, 2), 25.0)

    log = evaluate(net, test_set, ood)
    assert len(log) == len(test_set) + 7
    assert log.ood.sum() == 7
    assert np.all(~log.has_label[log.ood]) and not np.any(log.correct[log.ood])

    in_dist = log.subset(~log.ood)
    assert metrics.nll(in_dist) == pytest.approx(history.final.test_nll, abs=1e-9)


def test_evaluate_rejects_dimension_mismatch(quick_train_config, splits):
    net, _ = train(quick_train_config.model_copy(update={"epochs": 1}), *splits)
    with pytest.raises(DimensionMismatchError):
        evaluate(net, splits[2], np.zeros((3, 5)))


def test_mc_dropout_model_evaluates(quick_train_config, splits):
    net, _ = train(quick_train_config.model_copy(update={"dropout_rate": 0.3}), *splits)
    log = evaluate(MCDropoutModel(net=net, n_samples=20, seed=1), splits[2])
    np.testing.assert_allclose(log.probabilities.sum(axis=1), 1.0, atol=1e-9)
    assert 0.0 <= metrics.accuracy(log) <= 1.0


def test_ensemble_needs_two_members():
    with pytest.raises(InvalidArgumentError):
        Ensemble(members=[])


def test_epoch_diagnostics_use_the_default_bin_count(quick_train_config, splits):
    net, history = train(quick_train_config, *splits)
    test_log = evaluate(net, splits[2].head(quick_train_config.eval_subset_size))
    assert history.final.test_ece == pytest.approx(metrics.ece(test_log, settings.DEFAULT_BINS))
    assert history.final.test_ecd == pytest.approx(metrics.ecd(test_log, settings.DEFAULT_BINS))


def test_early_stop_variants_are_prefixes_of_the_full_run(quick_train_config, splits):
    _, full = train(quick_train_config, *splits)
    for stop in range(1, quick_train_config.epochs + 1):
        _, variant = early_stop_variant(quick_train_config, stop, *splits)
        assert variant.records == full.records[:stop]


def test_ensemble_nll_does_not_exceed_the_average_member(quick_train_config, splits):
    test_set = splits[2]
    ensemble = train_ensemble(quick_train_config, *splits, n_members=3)
    member_nlls = [metrics.nll(evaluate(net, test_set)) for net in ensemble.members]
    assert metrics.nll(evaluate(ensemble, test_set)) <= np.mean(member_nlls) + 1e-12
