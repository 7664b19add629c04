"""Seeded synthetic datasets with known class posteriors, and OOD input generators.

Blob class means lie on a circle of radius ``radius`` in a seed-dependent random
2-plane of R^d; inputs are ``N(mean_y, spread^2 I)`` with uniform class priors, so the
posterior p(y | x) is available in closed form by Bayes' rule.
"""

from dataclasses import dataclass
from typing import Literal

from loguru import logger
import numpy as np
from numpy.typing import ArrayLike, NDArray

from calibreg.errors import InvalidArgumentError, UnsupportedKindError
from calibreg.models.dataset import DatasetDescriptor, SplitSpec
from calibreg.network import softmax
from calibreg.numerics import Matrix, Rng, as_matrix


OodMode = Literal["shifted_mean", "uniform_box", "ring"]


@dataclass(frozen=True)
class Dataset:
    inputs: Matrix
    labels: NDArray[np.int64]
    descriptor: DatasetDescriptor

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices: ArrayLike) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(inputs=self.inputs[indices], labels=self.labels[indices], descriptor=self.descriptor)

    def head(self, n: int) -> "Dataset":
        return self.subset(np.arange(min(n, len(self))))


def _plane(descriptor: DatasetDescriptor) -> Matrix:
    """Orthonormal 2 x d basis of the plane holding the class means."""
    d = descriptor.n_features
    if d == 2:
        return np.eye(2)
    rng = Rng(descriptor.seed).fork("plane")
    q, _ = np.linalg.qr(rng.normal((d, 2)))
    return q.T


def class_means(descriptor: DatasetDescriptor) -> Matrix:
    if descriptor.kind != "blobs":
        raise UnsupportedKindError(f"data: '{descriptor.kind}' has no class means")
    k = descriptor.n_classes
    offset = Rng(descriptor.seed).fork("means").uniform(0.0, 2.0 * np.pi / k)
    angles = offset + 2.0 * np.pi * np.arange(k) / k
    circle = descriptor.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return circle @ _plane(descriptor)


def make_blobs(
    n_classes: int = 10,
    n_samples: int = 10000,
    n_features: int = 2,
    spread: float = 0.21,
    seed: int = 0,
    radius: float = 1.0,
) -> Dataset:
    if n_classes < 2 or n_features < 2 or n_samples < 1:
        raise InvalidArgumentError(f"data: invalid blobs request K={n_classes}, d={n_features}, n={n_samples}")
    descriptor = DatasetDescriptor(
        kind="blobs", n_classes=n_classes, n_samples=n_samples, n_features=n_features, spread=spread, radius=radius, seed=seed
    )
    return generate(descriptor)


def make_two_moons(n_samples: int = 1000, noise: float = 0.1, seed: int = 0) -> Dataset:
    if n_samples < 2:
        raise InvalidArgumentError(f"data: two_moons needs n >= 2, got {n_samples}")
    descriptor = DatasetDescriptor(kind="two_moons", n_classes=2, n_features=2, n_samples=n_samples, noise=noise, seed=seed)
    return generate(descriptor)


def _moon_arcs(n_outer: int, n_inner: int) -> tuple[Matrix, Matrix]:
    t_outer = np.linspace(0.0, np.pi, n_outer)
    t_inner = np.linspace(0.0, np.pi, n_inner)
    outer = np.stack([np.cos(t_outer), np.sin(t_outer)], axis=1)
    inner = np.stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)], axis=1)
    return outer, inner


def generate(descriptor: DatasetDescriptor) -> Dataset:
    """Regenerate a dataset from its descriptor; bit-identical for identical descriptors."""
    root = Rng(descriptor.seed)
    n = descriptor.n_samples

    if descriptor.kind == "blobs":
        means = class_means(descriptor)
        labels = root.fork("labels").integers(0, descriptor.n_classes, n)
        noise = root.fork("samples").normal((n, descriptor.n_features)) * descriptor.spread
        inputs = means[labels] + noise
    else:
        n_outer = n // 2
        outer, inner = _moon_arcs(n_outer, n - n_outer)
        points = np.vstack([outer, inner])
        labels = np.concatenate([np.zeros(n_outer, dtype=np.int64), np.ones(n - n_outer, dtype=np.int64)])
        if descriptor.noise > 0:
            points = points + root.fork("samples").normal(points.shape) * descriptor.noise
        order = root.fork("order").permutation(n)
        inputs, labels = points[order], labels[order]

    logger.debug(f"Generated {descriptor.kind} dataset: n={n}, K={descriptor.n_classes}, seed={descriptor.seed}")
    return Dataset(inputs=inputs, labels=np.asarray(labels, dtype=np.int64), descriptor=descriptor)


def true_posterior(descriptor: DatasetDescriptor, x: ArrayLike) -> NDArray[np.float64]:
    """p(y | x) by Bayes' rule on the generating mixture; one row per input point."""
    if descriptor.kind != "blobs":
        raise UnsupportedKindError(f"data: no closed-form posterior for '{descriptor.kind}'")

    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    points = as_matrix(points[None, :] if single else points, "points")

    means = class_means(descriptor)
    sq_dist = ((points[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    posterior = softmax(-sq_dist / (2.0 * descriptor.spread**2))
    return posterior[0] if single else posterior


def sample_labels_from_posterior(descriptor: DatasetDescriptor, x: ArrayLike, rng: Rng) -> NDArray[np.int64]:
    posterior = true_posterior(descriptor, as_matrix(x, "points"))
    u = rng.uniform(size=(posterior.shape[0], 1))
    return np.minimum((np.cumsum(posterior, axis=1) < u).sum(axis=1), descriptor.n_classes - 1).astype(np.int64)


def _support(descriptor: DatasetDescriptor) -> tuple[Matrix, float, Matrix]:
    """Anchor points of the training support, their length scale and the 2-plane they span."""
    if descriptor.kind == "blobs":
        return class_means(descriptor), descriptor.spread, _plane(descriptor)
    outer, inner = _moon_arcs(100, 100)
    return np.vstack([outer, inner]), max(descriptor.noise, 0.05), np.eye(2)


def _min_distance(points: Matrix, anchors: Matrix) -> NDArray[np.float64]:
    return np.sqrt(((points[:, None, :] - anchors[None, :, :]) ** 2).sum(axis=2)).min(axis=1)


def make_ood(descriptor: DatasetDescriptor, n_samples: int, mode: OodMode = "shifted_mean", seed: int = 1, shift: float = 6.0) -> Matrix:
    """OOD inputs with negligible in-distribution density.

    ``shifted_mean`` draws N(c, spread^2 I) around a centre ``shift + 3`` spreads beyond the
    support and keeps only points at least ``shift - 1`` spreads from every anchor;
    ``uniform_box`` and ``ring`` keep clear of the support by 4 and ``shift`` spreads.
    """
    if n_samples < 1:
        raise InvalidArgumentError(f"data: need at least one OOD sample, got {n_samples}")

    anchors, scale, plane = _support(descriptor)
    centre = anchors.mean(axis=0)
    reach = float(np.linalg.norm(anchors - centre, axis=1).max())
    rng = Rng(seed).fork(f"ood-{mode}")
    d = anchors.shape[1]

    if mode == "shifted_mean":
        direction = rng.normal(d)
        direction /= np.linalg.norm(direction)
        mean = centre + direction * (reach + (shift + 3.0) * scale)
        min_gap = (shift - 1.0) * scale

        def draw(size: int) -> Matrix:
            return mean + rng.normal((size, d)) * scale

    elif mode == "uniform_box":
        half_width = 2.0 * (reach + 4.0 * scale)
        min_gap = 4.0 * scale

        def draw(size: int) -> Matrix:
            return centre + rng.uniform(-half_width, half_width, (size, d))

    elif mode == "ring":
        ring_radius = reach + shift * scale
        min_gap = 0.0

        def draw(size: int) -> Matrix:
            angles = rng.uniform(0.0, 2.0 * np.pi, size)
            circle = ring_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
            return centre + circle @ plane

    else:
        raise UnsupportedKindError(f"data: unknown OOD mode '{mode}'")

    kept: list[Matrix] = []
    n_kept = 0
    while n_kept < n_samples:
        batch = draw(2 * (n_samples - n_kept))
        batch = batch[_min_distance(batch, anchors) >= min_gap]
        kept.append(batch)
        n_kept += batch.shape[0]

    logger.debug(f"Generated {n_samples} OOD inputs ({mode}) for {descriptor.kind}")
    return np.vstack(kept)[:n_samples]


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    n = len(dataset)
    n_train = int(round(spec.train * n))
    n_val = int(round(spec.validation * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise InvalidArgumentError(f"data: split {spec.train}/{spec.validation}/{spec.test} of n={n} leaves an empty part")

    order = Rng(spec.seed).fork("split").permutation(n)
    train = dataset.subset(order[:n_train])
    validation = dataset.subset(order[n_train : n_train + n_val])
    test = dataset.subset(order[n_train + n_val :])
    logger.info(f"Split {n} samples into train={n_train}, validation={n_val}, test={n_test}")
    return train, validation, test
