import numpy as np
import pytest

from calibreg.data import make_blobs
from calibreg.models.config import ExperimentConfig, TrainConfig
from calibreg.models.dataset import DatasetDescriptor, OodSpec, SplitSpec
from calibreg.network import init_network
from calibreg.numerics import Rng
from calibreg.prediction_log import PredictionLog


@pytest.fixture
def rng() -> Rng:
    return Rng(0)


@pytest.fixture
def small_net():
    return init_network([3, 5, 4, 3], Rng(7))


@pytest.fixture
def blobs():
    return make_blobs(n_classes=3, n_samples=300, n_features=2, spread=0.1, seed=3)


@pytest.fixture
def quick_train_config() -> TrainConfig:
    return TrainConfig(epochs=3, batch_size=32, lr=0.05, hidden_dims=[16], eval_subset_size=200, seed=0)


@pytest.fixture
def quick_experiment(quick_train_config) -> ExperimentConfig:
    return ExperimentConfig(
        name="quick",
        dataset=DatasetDescriptor(n_classes=3, n_samples=300, spread=0.15, seed=2),
        split=SplitSpec(train=0.6, validation=0.2, test=0.2, seed=0),
        train=quick_train_config,
        ood=OodSpec(n_samples=40),
    )


@pytest.fixture
def random_log():
    """Factory for labeled logs with Gaussian logits."""

    def make(gen: np.random.Generator, n: int = 50, k: int = 4, scale: float = 3.0) -> PredictionLog:
        return PredictionLog.from_logits(gen.normal(size=(n, k)) * scale, gen.integers(0, k, size=n))

    return make
