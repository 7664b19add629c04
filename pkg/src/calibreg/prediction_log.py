from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from calibreg.errors import DimensionMismatchError, InvalidArgumentError
from calibreg.network import log_softmax, softmax
from calibreg.numerics import Matrix, as_matrix, ensure_finite


NO_LABEL = -1


@dataclass(frozen=True)
class PredictionLog:
    """Per-sample predictions: the single input format of every metric.

    ``labels`` holds ``NO_LABEL`` for rows without a label (OOD rows); ``ood`` flags
    out-of-distribution inputs. Probabilities and predicted classes are derived from
    the logits, with argmax ties resolved to the lowest class index.
    """

    logits: Matrix
    labels: NDArray[np.int64]
    ood: NDArray[np.bool_]

    def __post_init__(self):
        logits = as_matrix(self.logits, "logits")
        ensure_finite(logits, "logits")
        n, k = logits.shape
        labels = np.asarray(self.labels, dtype=np.int64)
        ood = np.asarray(self.ood, dtype=bool)
        if labels.shape != (n,) or ood.shape != (n,):
            raise DimensionMismatchError(f"prediction log: {n} rows but {labels.shape} labels / {ood.shape} ood flags")
        if np.any((labels < NO_LABEL) | (labels >= k)):
            raise InvalidArgumentError(f"prediction log: labels must lie in [0, {k - 1}] or be absent")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ood", ood)

    @classmethod
    def from_logits(
        cls, logits: ArrayLike, labels: ArrayLike | None = None, ood: ArrayLike | None = None
    ) -> "PredictionLog":
        logits = as_matrix(logits, "logits")
        n = logits.shape[0]
        labels = np.full(n, NO_LABEL, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
        ood = np.zeros(n, dtype=bool) if ood is None else np.asarray(ood, dtype=bool)
        return cls(logits=logits, labels=labels, ood=ood)

    @classmethod
    def from_probabilities(
        cls, probabilities: ArrayLike, labels: ArrayLike | None = None, ood: ArrayLike | None = None
    ) -> "PredictionLog":
        """Wrap averaged predictive distributions (ensembles, MC-dropout) via their log-probabilities."""
        probs = as_matrix(probabilities, "probabilities")
        return cls.from_logits(np.log(np.clip(probs, np.finfo(np.float64).tiny, None)), labels, ood)

    def __len__(self) -> int:
        return self.logits.shape[0]

    @property
    def n_classes(self) -> int:
        return self.logits.shape[1]

    @property
    def probabilities(self) -> Matrix:
        return softmax(self.logits)

    @property
    def log_probabilities(self) -> Matrix:
        return log_softmax(self.logits)

    @property
    def predicted(self) -> NDArray[np.int64]:
        return np.argmax(self.probabilities, axis=1)

    @property
    def confidence(self) -> NDArray[np.float64]:
        return self.probabilities.max(axis=1)

    @property
    def has_label(self) -> NDArray[np.bool_]:
        return self.labels != NO_LABEL

    @property
    def correct(self) -> NDArray[np.bool_]:
        """Correctness per row; ``False`` on unlabeled rows (see ``has_label``)."""
        return self.has_label & (self.predicted == self.labels)

    def subset(self, mask: ArrayLike) -> "PredictionLog":
        mask = np.asarray(mask)
        return PredictionLog(logits=self.logits[mask], labels=self.labels[mask], ood=self.ood[mask])

    def labeled(self) -> "PredictionLog":
        return self.subset(self.has_label)

    def in_distribution(self) -> "PredictionLog":
        return self.subset(~self.ood)

    def concat(self, other: "PredictionLog") -> "PredictionLog":
        if other.n_classes != self.n_classes:
            raise DimensionMismatchError(f"prediction log: cannot join K={self.n_classes} with K={other.n_classes}")
        return PredictionLog(
            logits=np.vstack([self.logits, other.logits]),
            labels=np.concatenate([self.labels, other.labels]),
            ood=np.concatenate([self.ood, other.ood]),
        )
