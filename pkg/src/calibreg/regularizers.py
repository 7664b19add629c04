"""Logit-space penalties with exact gradients, and decoupled weight decay.

Every penalty returns a ``PenaltyValue`` whose ``dlogits`` has the shape of the logit
batch; the trainer adds ``coefficient * dlogits`` to the NLL gradient before backprop.

The 1-D transport estimator matches sorted samples to standard-normal quantiles at the
midpoints ``(i - 0.5) / m``. PER replaces the transport of the whole projected batch by
the average of per-sample transports from a point mass ``a`` to N(0, 1), which has the
closed form ``E|Z - a| = a * erf(a / sqrt 2) + sqrt(2 / pi) * exp(-a^2 / 2)``.
"""

from dataclasses import dataclass

from loguru import logger
import numpy as np
from numpy.typing import ArrayLike
from scipy.special import erf, ndtri

from calibreg.errors import DecayOvershootError, InvalidArgumentError
from calibreg.models.config import RegularizerConfig
from calibreg.network import Network
from calibreg.numerics import Matrix, Rng, Vector, as_matrix, ensure_finite


SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))


@dataclass(frozen=True)
class PenaltyValue:
    value: float
    dlogits: Matrix


def lp_penalty(logits: ArrayLike, p: int) -> PenaltyValue:
    z = as_matrix(logits, "logits")
    m = z.shape[0]
    if m < 1:
        raise InvalidArgumentError("regularizers: empty logit batch")

    if p == 1:
        return PenaltyValue(value=float(np.abs(z).sum() / m), dlogits=np.sign(z) / m)
    if p == 2:
        return PenaltyValue(value=float((z**2).sum() / m), dlogits=2.0 * z / m)
    raise InvalidArgumentError(f"regularizers: unsupported norm order p={p}")


def sample_unit_sphere(k: int, rng: Rng) -> Vector:
    return sample_projections(k, 1, rng)[:, 0]


def sample_projections(k: int, n_projections: int, rng: Rng) -> Matrix:
    """K x n matrix whose columns are uniform on the unit sphere S^{K-1}."""
    if k < 1 or n_projections < 1:
        raise InvalidArgumentError(f"regularizers: need K >= 1 and n_projections >= 1, got {k}, {n_projections}")

    theta = rng.normal((k, n_projections))
    norms = np.linalg.norm(theta, axis=0)
    while np.any(norms == 0.0):
        zero = norms == 0.0
        theta[:, zero] = rng.normal((k, int(zero.sum())))
        norms = np.linalg.norm(theta, axis=0)
    return theta / norms


def gaussian_quantile_grid(m: int) -> Vector:
    return ndtri((np.arange(1, m + 1) - 0.5) / m)


def _w1_columns(projected: Matrix) -> tuple[Vector, Matrix]:
    """Per-column quantile-matching W1 to N(0, 1) and its gradient w.r.t. each entry."""
    m = projected.shape[0]
    order = np.argsort(projected, axis=0, kind="stable")
    sorted_values = np.take_along_axis(projected, order, axis=0)
    residual = sorted_values - gaussian_quantile_grid(m)[:, None]

    values = np.abs(residual).mean(axis=0)
    grad = np.empty_like(projected)
    np.put_along_axis(grad, order, np.sign(residual) / m, axis=0)
    return values, grad


def w1_empirical_vs_gaussian_1d(samples: ArrayLike) -> tuple[float, Vector]:
    s = np.asarray(samples, dtype=np.float64).ravel()
    if s.size < 1:
        raise InvalidArgumentError("regularizers: need at least one sample")
    ensure_finite(s, "samples")

    values, grad = _w1_columns(s[:, None])
    return float(values[0]), grad[:, 0]


def _resolve_projections(k: int, n_projections: int, rng: Rng | None, projections: Matrix | None) -> Matrix:
    if projections is not None:
        theta = as_matrix(projections, "projections")
        if theta.shape[0] != k:
            raise InvalidArgumentError(f"regularizers: projections have {theta.shape[0]} rows, logits have {k} columns")
        return theta
    if rng is None:
        raise InvalidArgumentError("regularizers: either an Rng or fixed projections is required")
    return sample_projections(k, n_projections, rng)


def sw1_penalty(
    logits: ArrayLike, n_projections: int, rng: Rng | None = None, projections: Matrix | None = None
) -> PenaltyValue:
    z = as_matrix(logits, "logits")
    ensure_finite(z, "logits")
    theta = _resolve_projections(z.shape[1], n_projections, rng, projections)

    values, grad = _w1_columns(z @ theta)
    n = theta.shape[1]
    return PenaltyValue(value=float(values.mean()), dlogits=grad @ theta.T / n)


def point_mass_w1(a: ArrayLike) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a * erf(a / np.sqrt(2.0)) + SQRT_2_OVER_PI * np.exp(-0.5 * a**2)


def point_mass_w1_grad(a: ArrayLike) -> np.ndarray:
    return erf(np.asarray(a, dtype=np.float64) / np.sqrt(2.0))


def per_penalty(
    logits: ArrayLike, n_projections: int, rng: Rng | None = None, projections: Matrix | None = None
) -> PenaltyValue:
    z = as_matrix(logits, "logits")
    ensure_finite(z, "logits")
    m = z.shape[0]
    if m < 1:
        raise InvalidArgumentError("regularizers: empty logit batch")
    theta = _resolve_projections(z.shape[1], n_projections, rng, projections)
    n = theta.shape[1]

    projected = z @ theta
    value = float(point_mass_w1(projected).sum() / (m * n))
    dprojected = point_mass_w1_grad(projected) / (m * n)
    return PenaltyValue(value=value, dlogits=dprojected @ theta.T)


class ProjectionSource:
    """Projection directions for one training run: resampled every call, or drawn once."""

    def __init__(self, n_classes: int, config: RegularizerConfig, rng: Rng):
        self.n_classes = n_classes
        self.n_projections = config.n_projections
        self.fixed = config.fixed_projections
        self.rng = rng
        self._fixed_theta = sample_projections(n_classes, self.n_projections, rng) if self.fixed else None

    def next(self) -> Matrix:
        if self._fixed_theta is not None:
            return self._fixed_theta
        return sample_projections(self.n_classes, self.n_projections, self.rng)


def penalty(config: RegularizerConfig, logits: ArrayLike, source: ProjectionSource | None = None) -> PenaltyValue:
    """Unweighted penalty selected by ``config.kind``; the caller applies the coefficient."""
    z = as_matrix(logits, "logits")
    if config.kind == "none":
        return PenaltyValue(value=0.0, dlogits=np.zeros_like(z))
    if config.kind == "l1_norm":
        return lp_penalty(z, 1)
    if config.kind == "l2_norm_squared":
        return lp_penalty(z, 2)

    if source is None:
        raise InvalidArgumentError(f"regularizers: '{config.kind}' needs a projection source")
    theta = source.next()
    if config.kind == "sw1":
        return sw1_penalty(z, config.n_projections, projections=theta)
    return per_penalty(z, config.n_projections, projections=theta)


def decay_factor(decay_rate: float, lr: float) -> float:
    if decay_rate < 0:
        raise InvalidArgumentError(f"regularizers: decay rate must be nonnegative, got {decay_rate}")
    factor = 1.0 - lr * decay_rate
    if factor < 0:
        raise DecayOvershootError(f"regularizers: lr * decay_rate = {lr * decay_rate:.4g} overshoots past zero")
    return factor


def decoupled_weight_decay_step(net: Network, decay_rate: float, lr: float) -> Network:
    """Shrink every weight matrix by ``1 - lr * decay_rate``; biases are exempt."""
    factor = decay_factor(decay_rate, lr)
    if factor == 1.0:
        return net

    params = net.parameters()
    decayed = [p * factor if i % 2 == 0 else p for i, p in enumerate(params)]
    logger.debug(f"Decoupled decay factor {factor:.6f}")
    return net.with_parameters(decayed)
