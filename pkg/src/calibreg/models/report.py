from typing import Any, Literal

from pydantic import BaseModel, Field

from calibreg.settings import settings


class ConfidenceBin(BaseModel):
    lower: float = Field(..., description="Exclusive lower confidence bound")
    upper: float = Field(..., description="Inclusive upper confidence bound")
    count: int = Field(..., ge=0, description="Number of predictions in the bin")
    mean_accuracy: float = Field(default=0.0, ge=0.0, le=1.0, description="acc(G_i); 0 for empty bins")
    mean_confidence: float = Field(default=0.0, ge=0.0, le=1.0, description="conf(G_i); 0 for empty bins")


class ReliabilityRow(BaseModel):
    midpoint: float
    accuracy: float
    confidence: float
    count: int


class EntropyHistogramRow(BaseModel):
    group: str = Field(..., description="Sample group: correct, misclassified or ood")
    lower: float = Field(..., description="Bin lower edge in nats")
    upper: float = Field(..., description="Bin upper edge in nats")
    density: float = Field(..., ge=0.0, description="Histogram density per nat; integrates to 1 per group")


class TemperatureFit(BaseModel):
    tau: float = Field(..., gt=0.0, description="Fitted temperature")
    holdout_nll_before: float = Field(..., description="Holdout NLL at tau = 1")
    holdout_nll_after: float = Field(..., description="Holdout NLL at the fitted tau")
    grid: list[float] = Field(default_factory=list, description="Coarse log-spaced tau grid")
    objective: list[float] = Field(default_factory=list, description="Holdout NLL on the grid")
    flat: bool = Field(default=False, description="Objective independent of tau (constant logit rows)")
    unimodal: bool = Field(default=True, description="Grid trace decreases then increases")
    at_boundary: bool = Field(default=False, description="Grid optimum sits on the search interval edge")


class RunMetrics(BaseModel):
    accuracy: float
    nll: float
    ece: float
    ecd: float
    norm_l1: float
    norm_l2: float
    sum_squared_weights: float | None = None
    entropy_correct: float | None = None
    entropy_misclassified: float | None = None
    entropy_ood: float | None = None
    nbaucc_misclassification: float | None = None
    nbaucc_ood: float | None = None


class TemperatureComparison(BaseModel):
    fit: TemperatureFit
    before: RunMetrics
    after: RunMetrics
    target_norm_l2: float = Field(..., description="Test ||f||_2 after temperature scaling (calibrated-norm target)")


class RunResult(BaseModel):
    seed: int
    status: Literal["completed", "collapsed", "diverged"]
    validation_accuracy: float | None = None
    test: RunMetrics | None = None
    temperature: TemperatureComparison | None = None
    ensemble: RunMetrics | None = None
    mc_dropout: RunMetrics | None = None
    mc_dropout_rate: float | None = None
    diverged_epoch: int | None = None


class CalibrationReport(BaseModel):
    schema_version: int = Field(default=settings.SCHEMA_VERSION)
    name: str
    tag: str = Field(..., description="'vanilla' when no penalty or decay is applied, else the regularizer kind")
    config_hash: str
    runs: list[RunResult] = Field(default_factory=list, description="Raw per-seed values")
    mean: RunMetrics | None = Field(default=None, description="Mean over completed and collapsed runs")
    mean_after_temperature: RunMetrics | None = None
    mean_ensemble: RunMetrics | None = None
    mean_mc_dropout: RunMetrics | None = None
    trivial_solution: bool = Field(default=False, description="At least one run collapsed")
    reliability: list[ReliabilityRow] = Field(default_factory=list, description="First run's reliability curve")
    entropy_histogram: list[EntropyHistogramRow] = Field(default_factory=list, description="First run's entropy density")


class TemperatureReport(BaseModel):
    schema_version: int = Field(default=settings.SCHEMA_VERSION)
    mode: Literal["holdout", "split-half"]
    tau: float = Field(..., gt=0.0, description="Fitted temperature; the mean over both directions in split-half mode")
    fits: list[TemperatureFit] = Field(..., description="One fit per direction")
    before: RunMetrics = Field(..., description="Evaluation-split metrics at tau = 1")
    after: RunMetrics = Field(..., description="Evaluation-split metrics at the fitted tau")


class SweepPoint(BaseModel):
    values: dict[str, Any] = Field(..., description="Grid value per dotted config path")
    directory: str = Field(..., description="Directory holding the point's runs and report")
    mean_validation_accuracy: float | None = Field(default=None, description="Over runs that did not diverge")
    mean_test_norm_l2: float | None = None
    mean_target_norm_l2: float | None = None
    statuses: list[str] = Field(default_factory=list)


class SweepSummary(BaseModel):
    schema_version: int = Field(default=settings.SCHEMA_VERSION)
    name: str
    parameters: list[str]
    points: list[SweepPoint] = Field(default_factory=list)
    selected: dict[str, Any] | None = Field(default=None, description="Grid point with the best validation accuracy")
    selected_validation_accuracy: float | None = None
    calibrated_norm_target: float | None = Field(
        default=None, description="Vanilla point's test ||f||_2 after temperature scaling"
    )
    feasible_weight_decay: float | None = Field(
        default=None, description="Decay rate whose test ||f||_2 lies closest to the calibrated-norm target"
    )
