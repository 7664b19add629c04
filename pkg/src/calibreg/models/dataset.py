from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class DatasetDescriptor(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["blobs", "two_moons"] = Field(default="blobs", description="Generator family")
    n_classes: int = Field(default=10, ge=2, description="Number of classes K")
    n_samples: int = Field(default=10000, ge=1, description="Number of samples n")
    n_features: int = Field(default=2, ge=2, description="Input dimension d")
    spread: float = Field(default=0.21, gt=0.0, description="Per-class isotropic standard deviation (blobs)")
    radius: float = Field(default=1.0, gt=0.0, description="Distance of the class means from the origin (blobs)")
    noise: float = Field(default=0.1, ge=0.0, description="Gaussian jitter on the arcs (two_moons)")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Generator seed")

    @model_validator(mode="after")
    def _check_kind(self) -> "DatasetDescriptor":
        if self.kind == "two_moons" and (self.n_classes != 2 or self.n_features != 2):
            raise ValueError("two_moons datasets have exactly 2 classes and 2 features")
        if self.kind == "two_moons" and self.n_samples < 2:
            raise ValueError("two_moons needs n_samples >= 2")
        return self


class SplitSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    train: float = Field(default=0.8, gt=0.0, lt=1.0, description="Training fraction")
    validation: float = Field(default=0.1, gt=0.0, lt=1.0, description="Validation fraction")
    test: float = Field(default=0.1, gt=0.0, lt=1.0, description="Test fraction")
    seed: int = Field(default=0, ge=0, lt=2**64, description="Shuffle seed")

    @model_validator(mode="after")
    def _check_sum(self) -> "SplitSpec":
        total = self.train + self.validation + self.test
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")
        return self


class OodSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Literal["shifted_mean", "uniform_box", "ring"] = Field(default="shifted_mean", description="OOD generator")
    n_samples: int = Field(default=1000, ge=1, description="Number of OOD inputs")
    shift: float = Field(default=6.0, ge=6.0, description="Shift in units of the class spread")
    seed: int = Field(default=1, ge=0, lt=2**64, description="OOD generator seed")
