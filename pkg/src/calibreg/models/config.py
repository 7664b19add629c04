from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from calibreg.models.dataset import DatasetDescriptor, OodSpec, SplitSpec
from calibreg.settings import settings


RegularizerKind = Literal["none", "l1_norm", "l2_norm_squared", "sw1", "per"]

DEFAULT_COEFFICIENT_GRIDS: dict[str, list[float]] = {
    "none": [0.0],
    "l1_norm": [0.1, 0.03, 0.01, 0.003],
    "sw1": [0.1, 0.03, 0.01, 0.003],
    "l2_norm_squared": [0.03, 0.01, 0.003, 0.001],
    "per": [1.0, 0.3, 0.1, 0.03],
}


class RegularizerConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: RegularizerKind = Field(default="none", description="Penalty applied to the logits")
    coefficient: float = Field(default=0.0, ge=0.0, allow_inf_nan=False, description="Penalty weight lambda")
    n_projections: int = Field(default=settings.N_PROJECTIONS, ge=1, description="Projection count (sw1/per)")
    fixed_projections: bool = Field(default=False, description="Draw projections once per run instead of every step")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.coefficient > 0.0


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(default=30, ge=1, description="Number of epochs")
    batch_size: int = Field(default=128, ge=1, description="Minibatch size")
    lr: float = Field(default=0.1, gt=0.0, description="Base learning rate")
    lr_scaling: Literal["none", "linear"] = Field(
        default="none", description="'linear' multiplies lr by batch_size / REFERENCE_BATCH_SIZE"
    )
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0, description="Momentum coefficient")
    lr_schedule: list[tuple[int, float]] = Field(
        default_factory=list, description="(epoch, factor) pairs; lr is multiplied by factor from that epoch on"
    )
    warmup_epochs: int = Field(default=0, ge=0, description="Linear warm-up from lr/10 over these epochs")
    clip_norm: float | None = Field(default=1.0, gt=0.0, description="Global gradient-norm clip, None disables")
    weight_decay: float = Field(default=0.0, ge=0.0, description="Decoupled weight decay rate")
    regularizer: RegularizerConfig = Field(default_factory=RegularizerConfig)
    seed: int = Field(default=0, ge=0, lt=2**64, description="Root seed for init, shuffling, dropout, projections")
    hidden_dims: list[int] = Field(default_factory=lambda: [128, 128], description="Hidden layer widths")
    activation: Literal["relu", "tanh"] = Field(default="relu", description="Hidden nonlinearity")
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0, description="Dropout after each hidden activation")
    eval_subset_size: int = Field(default=settings.EVAL_SUBSET_SIZE, ge=1, description="Rows used for epoch diagnostics")
    stop_epoch: int | None = Field(default=None, ge=1, description="Early-stopping variant with compressed schedule")

    @field_validator("lr_schedule")
    @classmethod
    def _check_schedule(cls, value: list[tuple[int, float]]) -> list[tuple[int, float]]:
        epochs = [epoch for epoch, _ in value]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("lr_schedule epochs must be strictly increasing")
        if any(factor <= 0 for _, factor in value):
            raise ValueError("lr_schedule factors must be positive")
        return value

    @model_validator(mode="after")
    def _check_stop(self) -> "TrainConfig":
        if self.stop_epoch is not None and self.stop_epoch > self.epochs:
            raise ValueError(f"stop_epoch {self.stop_epoch} exceeds epochs {self.epochs}")
        return self

    @property
    def effective_lr(self) -> float:
        if self.lr_scaling == "linear":
            return self.lr * self.batch_size / settings.REFERENCE_BATCH_SIZE
        return self.lr


class MetricOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bins: int = Field(default=settings.DEFAULT_BINS, ge=1, description="Confidence bins for ECE/ECD")
    nbaucc_tau: float = Field(default=settings.NBAUCC_TAU, gt=0.0, le=1.0, description="NBAUCC upper threshold")
    nbaucc_steps: int = Field(default=settings.NBAUCC_STEPS, ge=1, description="NBAUCC grid size")
    entropy_bins: int = Field(default=settings.ENTROPY_HISTOGRAM_BINS, ge=1, description="Entropy histogram bins")


class BaselineOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ensemble_members: int = Field(default=0, ge=0, description="Deep-ensemble size, 0 disables")
    mc_dropout_samples: int = Field(default=0, ge=0, description="MC-dropout test-time samples, 0 disables")
    mc_dropout_rates: list[float] = Field(
        default_factory=lambda: [0.1, 0.2, 0.3, 0.4, 0.5], description="Dropout rates searched on validation accuracy"
    )

    @field_validator("ensemble_members")
    @classmethod
    def _check_members(cls, value: int) -> int:
        if value == 1:
            raise ValueError("an ensemble needs at least 2 members")
        return value

    @field_validator("mc_dropout_rates")
    @classmethod
    def _check_rates(cls, value: list[float]) -> list[float]:
        if not value or any(not 0.0 < rate < 1.0 for rate in value):
            raise ValueError("mc_dropout_rates must be a non-empty list in (0, 1)")
        return value


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(default="experiment", description="Run name used in output paths and reports")
    dataset: DatasetDescriptor = Field(default_factory=DatasetDescriptor)
    split: SplitSpec = Field(default_factory=SplitSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    metrics: MetricOptions = Field(default_factory=MetricOptions)
    ood: OodSpec | None = Field(default_factory=OodSpec, description="OOD inputs appended to the test log")
    baselines: BaselineOptions = Field(default_factory=BaselineOptions)
    temperature_scaling: bool = Field(default=True, description="Fit tau on the validation split and report both")
    output_dir: str = Field(default=settings.DEFAULT_OUT_DIR, description="Directory receiving run artifacts")
    repeats: int = Field(default=1, ge=1, description="Number of seeds (train.seed, train.seed + 1, ...)")


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    base: ExperimentConfig = Field(default_factory=ExperimentConfig)
    grid: dict[str, list[float | int | str | None] | Literal["default"]] = Field(
        ..., description="Dotted config paths mapped to value lists; 'default' uses the built-in coefficient grid"
    )

    @field_validator("grid")
    @classmethod
    def _check_grid(cls, value: dict) -> dict:
        if not 1 <= len(value) <= 2:
            raise ValueError(f"a sweep grid names one or two parameters, got {len(value)}")
        for key, values in value.items():
            if values == "default":
                if key != "train.regularizer.coefficient":
                    raise ValueError("'default' is only available for train.regularizer.coefficient")
            elif not values:
                raise ValueError(f"empty grid for '{key}'")
        return value
