import numpy as np
import pytest

from calibreg import metrics
from calibreg.errors import EmptyLogError, MissingLabelsError
from calibreg.network import nll_loss
from calibreg.prediction_log import PredictionLog


def binary_log(confidences, correct) -> PredictionLog:
    """Two-class log predicting class 0 with the given confidences (all > 0.5)."""
    c = np.asarray(confidences, dtype=np.float64)
    logits = np.stack([np.log(c / (1 - c)), np.zeros_like(c)], axis=1)
    labels = np.where(np.asarray(correct), 0, 1)
    return PredictionLog.from_logits(logits, labels)


def separable_log() -> PredictionLog:
    """Two confident correct rows and one near-uniform wrong row over 200 classes."""
    logits = np.zeros((3, 200))
    logits[:2, 0] = 100.0
    return PredictionLog.from_logits(logits, [0, 0, 1])


def brute_bins(log, n_bins):
    conf = log.confidence
    corr = log.correct
    groups = []
    for i in range(n_bins):
        lower, upper = i / n_bins, (i + 1) / n_bins
        members = [j for j in range(len(log)) if lower < conf[j] <= upper or (i == 0 and conf[j] <= lower)]
        groups.append(members)
    return conf, corr, groups


def brute_ece(log, n_bins):
    conf, corr, groups = brute_bins(log, n_bins)
    total = 0.0
    for members in groups:
        if members:
            acc = sum(corr[j] for j in members) / len(members)
            avg = sum(conf[j] for j in members) / len(members)
            total += len(members) / len(log) * abs(acc - avg)
    return total


def brute_ecd(log, n_bins, eps=1e-7):
    conf, corr, groups = brute_bins(log, n_bins)
    total = 0.0
    for members in groups:
        if members:
            a = sum(corr[j] for j in members) / len(members)
            c = min(max(sum(conf[j] for j in members) / len(members), eps), 1 - eps)
            total += len(members) / len(log) * -(a * np.log(c) + (1 - a) * np.log(1 - c))
    return total


def brute_nbaucc(log, flags, tau, steps):
    conf = log.confidence
    scores = []
    for i in range(1, steps + 1):
        t = tau * i / steps
        tp = sum(1 for j in range(len(log)) if conf[j] > t and flags[j])
        fp = sum(1 for j in range(len(log)) if conf[j] > t and not flags[j])
        fn = sum(1 for j in range(len(log)) if conf[j] <= t and flags[j])
        scores.append(0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn))
    return sum(scores) / steps


def test_bin_interval_convention():
    np.testing.assert_array_equal(metrics.bin_indices(np.array([0.2, 0.2000001, 1.0, 0.0]), 5), [0, 1, 4, 0])


def test_all_confident_predictions_fill_the_last_bin():
    log = PredictionLog.from_logits(np.tile([100.0, 0.0], (6, 1)), np.zeros(6))
    counts = [b.count for b in metrics.confidence_bins(log, 10)]
    assert counts == [0] * 9 + [6]


def test_hand_binning():
    bins = metrics.confidence_bins(binary_log([0.55, 0.65, 0.65, 0.95], [True] * 4), 10)
    assert {i: b.count for i, b in enumerate(bins) if b.count} == {5: 1, 6: 2, 9: 1}


def test_ece_single_bin_hand_value():
    log = PredictionLog.from_logits(np.tile([100.0, 0.0], (10, 1)), [0] * 9 + [1])
    assert metrics.ece(log, 10) == pytest.approx(0.1)


def test_ece_and_ecd_examples():
    half = PredictionLog.from_logits(np.zeros((2, 2)), [0, 1])
    assert metrics.ecd(half, 10) == pytest.approx(np.log(2.0))

    ninety = binary_log([0.9] * 10, [True] * 9 + [False])
    assert metrics.ece(ninety, 10) == pytest.approx(0.0, abs=1e-12)
    assert metrics.ecd(ninety, 10) == pytest.approx(float(metrics.binary_entropy(0.9)), abs=1e-9)
    assert metrics.ecd(ninety, 10) == pytest.approx(0.3251, abs=1e-4)


def test_metrics_match_brute_force(random_log):
    gen = np.random.default_rng(0)
    for _ in range(1000):
        log = random_log(gen, n=int(gen.integers(1, 40)), k=int(gen.integers(2, 6)), scale=float(gen.uniform(0.1, 6)))
        n_bins = int(gen.integers(1, 20))
        assert metrics.ece(log, n_bins) == pytest.approx(brute_ece(log, n_bins), abs=1e-12)
        assert metrics.ecd(log, n_bins) == pytest.approx(brute_ecd(log, n_bins), abs=1e-12)
        flags = log.correct
        assert metrics.nbaucc(log, flags, 0.5, 10) == pytest.approx(brute_nbaucc(log, flags, 0.5, 10), abs=1e-12)


def test_ecd_never_beats_the_entropy_floor():
    gen = np.random.default_rng(1)
    for _ in range(200):
        a, c = gen.uniform(0.01, 0.99, size=2)
        assert metrics.binary_cross_entropy(a, c) >= metrics.binary_entropy(a) - 1e-12


def test_metrics_are_permutation_invariant(random_log):
    log = random_log(np.random.default_rng(2), n=60)
    shuffled = log.subset(np.random.default_rng(3).permutation(60))
    assert metrics.ece(log) == pytest.approx(metrics.ece(shuffled), abs=1e-12)
    assert metrics.ecd(log) == pytest.approx(metrics.ecd(shuffled), abs=1e-12)


def test_metrics_need_labels():
    with pytest.raises(MissingLabelsError):
        metrics.ece(PredictionLog.from_logits(np.zeros((2, 3)), [0, -1]))
    with pytest.raises(EmptyLogError):
        metrics.accuracy(PredictionLog.from_logits(np.zeros((0, 3)), np.zeros(0)))


def test_ll_upper_bound_examples():
    assert metrics.ll_upper_bound([1.0, 0.0], [1 - 1e-12, 1e-12]) == pytest.approx(0.0, abs=1e-6)
    expected = 0.5 * np.log(0.8) + 0.5 * np.log(0.2)
    assert metrics.ll_upper_bound([0.5, 0.5], [0.8, 0.2]) == pytest.approx(expected, abs=1e-12)


def test_ll_upper_bound_holds_on_random_simplex_pairs():
    gen = np.random.default_rng(4)
    violations = 0
    for _ in range(100_000):
        k = int(gen.integers(2, 11))
        q, phi = gen.dirichlet(np.ones(k)), gen.dirichlet(np.ones(k))
        if np.sum(q * np.log(phi)) > metrics.ll_upper_bound(q, phi) + 1e-12:
            violations += 1
    assert violations == 0


def test_nll_examples(random_log):
    assert metrics.nll(PredictionLog.from_logits(np.zeros((3, 10)), [0, 4, 9])) == pytest.approx(np.log(10.0))

    log = random_log(np.random.default_rng(5), n=30)
    assert metrics.nll(log) == pytest.approx(nll_loss(log.logits, log.labels)[0], abs=1e-12)

    two = PredictionLog.from_logits([[0.0, np.log(3.0)], [0.0, 0.0]], [1, 0])
    assert metrics.nll(two) == pytest.approx(-(np.log(0.75) + np.log(0.5)) / 2)


def test_predictive_entropy_examples():
    log = PredictionLog.from_logits([[0.0, 0.0, 0.0, 0.0], [80.0, 0.0, 0.0, 0.0]])
    entropy = metrics.predictive_entropy(log)
    assert entropy[0] == pytest.approx(np.log(4.0))
    assert entropy[1] == pytest.approx(0.0, abs=1e-30)

    three = PredictionLog.from_logits([[np.log(2.0), 0.0, 0.0]])
    assert metrics.predictive_entropy(three)[0] == pytest.approx(1.5 * np.log(2.0))


def test_function_norm_examples():
    assert metrics.function_lp_norm(np.full((7, 4), -2.0), 2) == pytest.approx(2.0 * np.sqrt(4))
    z = np.array([[1.0, -2.0], [3.0, 0.0]])
    assert metrics.function_lp_norm(z, 1) == pytest.approx(3.0)
    assert metrics.function_lp_norm(z, 2) == pytest.approx(np.sqrt(7.0))
    assert metrics.function_lp_norm(z / 4.0, 2) == pytest.approx(np.sqrt(7.0) / 4.0, abs=1e-12)


def test_f1_examples():
    perfect = separable_log()
    flags = np.array([True, True, False])
    assert metrics.f1_at_threshold(perfect, flags, 0.6) == 1.0
    assert metrics.f1_at_threshold(perfect, flags, 1.0) == 0.0

    log = binary_log([0.9, 0.8, 0.7, 0.6], [True, True, False, False])
    assert metrics.f1_at_threshold(log, [True, True, False, False], 0.65) == pytest.approx(0.8)


def test_nbaucc_examples(random_log):
    perfect = separable_log()
    assert metrics.nbaucc(perfect, [True, True, False], 0.5, 50) == pytest.approx(1.0)

    log = random_log(np.random.default_rng(6))
    assert metrics.nbaucc(log, log.correct, 0.7, 1) == metrics.f1_at_threshold(log, log.correct, 0.7)


def test_reliability_curve_of_a_calibrated_log_follows_the_diagonal():
    gen = np.random.default_rng(7)
    conf = gen.uniform(0.5, 1.0, size=100_000)
    log = binary_log(conf, gen.uniform(size=conf.size) < conf)
    for row in metrics.reliability_curve(log, 10):
        if row.count:
            assert abs(row.accuracy - row.confidence) < 0.02
    assert metrics.ece(log, 10) < 0.01


def test_entropy_histogram_of_onehot_predictions():
    log = PredictionLog.from_logits(np.tile([60.0, 0.0, 0.0], (5, 1)), np.zeros(5))
    rows = metrics.entropy_histogram(log, 10)
    assert [r.group for r in rows] == ["correct"] * 10
    assert rows[0].density > 0 and all(r.density == 0 for r in rows[1:])


def test_entropy_histogram_integrates_to_one_per_group(random_log):
    log = random_log(np.random.default_rng(8), n=200, k=5, scale=1.5)
    ood = PredictionLog.from_logits(np.random.default_rng(9).normal(size=(50, 5)) * 0.2, ood=np.ones(50, dtype=bool))
    rows = metrics.entropy_histogram(log.concat(ood), 20)
    for group in ("correct", "misclassified", "ood"):
        mass = sum(r.density * (r.upper - r.lower) for r in rows if r.group == group)
        assert mass == pytest.approx(1.0, abs=1e-9)


def test_entropy_groups_split_by_correctness_and_ood():
    log = PredictionLog.from_logits([[5.0, 0.0], [5.0, 0.0], [0.0, 5.0]], [0, 1, -1], [False, False, True])
    groups = metrics.entropy_groups(log)
    assert groups["correct"].tolist() == [True, False, False]
    assert groups["misclassified"].tolist() == [False, True, False]
    assert groups["ood"].tolist() == [False, False, True]
