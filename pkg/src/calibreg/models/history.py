from typing import Literal

from pydantic import BaseModel, Field


class EpochRecord(BaseModel):
    epoch: int = Field(..., ge=1, description="1-based epoch index")
    lr: float = Field(..., description="Learning rate at the end of the epoch")
    train_loss: float = Field(..., description="Mean minibatch objective (NLL + lambda * penalty)")
    train_nll: float
    test_nll: float
    train_accuracy: float
    test_accuracy: float
    train_norm_l2: float = Field(..., description="||f||_2 on the fixed training evaluation subset")
    test_norm_l2: float = Field(..., description="||f||_2 on the fixed test evaluation subset")
    test_max_log_prob: float = Field(..., description="Mean max_k log phi_k on the test subset")
    test_ece: float = Field(..., description="ECE on the test subset over settings.DEFAULT_BINS equal-width bins")
    test_ecd: float = Field(..., description="ECD on the test subset over settings.DEFAULT_BINS equal-width bins")
    sum_squared_weights: float


class TrainHistory(BaseModel):
    records: list[EpochRecord] = Field(default_factory=list)
    status: Literal["completed", "collapsed", "diverged"] = "completed"
    collapsed_epoch: int | None = Field(default=None, description="First epoch with test ||f||_2 below the collapse ratio")
    diverged_epoch: int | None = None

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None
