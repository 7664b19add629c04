from loguru import logger
import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize_scalar

from calibreg.errors import EmptyLogError, InvalidArgumentError
from calibreg.models.report import TemperatureFit
from calibreg.network import nll_loss
from calibreg.numerics import Matrix, Rng, as_matrix
from calibreg.settings import settings


def apply_temperature(logits: ArrayLike, tau: float) -> Matrix:
    if not tau > 0:
        raise InvalidArgumentError(f"calibration: temperature must be positive, got {tau}")
    return as_matrix(logits, "logits") / tau


def _is_unimodal(values: NDArray[np.float64], slack: float = 1e-12) -> bool:
    best = int(np.argmin(values))
    falling = np.all(np.diff(values[: best + 1]) <= slack)
    rising = np.all(np.diff(values[best:]) >= -slack)
    return bool(falling and rising)


def fit_temperature(
    logits: ArrayLike,
    labels: ArrayLike,
    lower: float = settings.TEMPERATURE_LOWER,
    upper: float = settings.TEMPERATURE_UPPER,
    grid_size: int = settings.TEMPERATURE_GRID_SIZE,
    tol: float = settings.TEMPERATURE_TOL,
) -> TemperatureFit:
    """Holdout-NLL minimizing temperature: log-spaced grid, then bounded golden-section refinement."""
    z = as_matrix(logits, "logits")
    labels = np.asarray(labels, dtype=np.int64)
    if z.shape[0] == 0:
        raise EmptyLogError("calibration: empty holdout set")
    if not 0 < lower < 1 < upper:
        raise InvalidArgumentError(f"calibration: search interval [{lower}, {upper}] must contain 1")

    def objective(tau: float) -> float:
        return nll_loss(z / tau, labels)[0]

    nll_before = objective(1.0)

    if np.all(np.ptp(z, axis=1) == 0.0):
        logger.warning("Temperature objective is flat (every logit row is constant); keeping tau = 1")
        return TemperatureFit(tau=1.0, holdout_nll_before=nll_before, holdout_nll_after=nll_before, flat=True)

    grid = np.geomspace(lower, upper, grid_size)
    values = np.array([objective(t) for t in grid])
    best = int(np.argmin(values))

    unimodal = _is_unimodal(values)
    if not unimodal:
        logger.warning("Temperature objective is not unimodal on the search grid")

    at_boundary = best in (0, grid_size - 1)
    if at_boundary:
        logger.warning(f"Temperature optimum lies on the search boundary (tau ~ {grid[best]:.4g}); widen the interval")

    bracket = (grid[max(best - 1, 0)], grid[min(best + 1, grid_size - 1)])
    result = minimize_scalar(objective, bounds=bracket, method="bounded", options={"xatol": tol / 10})
    tau = float(result.x)
    nll_after = objective(tau)

    if values[best] < nll_after:
        tau, nll_after = float(grid[best]), float(values[best])
    if nll_after > nll_before:
        tau, nll_after = 1.0, nll_before

    logger.info(f"Fitted temperature tau={tau:.4f}: holdout NLL {nll_before:.4f} -> {nll_after:.4f}")
    return TemperatureFit(
        tau=tau,
        holdout_nll_before=nll_before,
        holdout_nll_after=nll_after,
        grid=grid.tolist(),
        objective=values.tolist(),
        unimodal=unimodal,
        at_boundary=at_boundary,
    )


def split_halves(n: int, rng: Rng) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Two disjoint, equal-size (up to one row) index sets covering ``range(n)``."""
    if n < 2:
        raise InvalidArgumentError(f"calibration: need at least two rows to split, got {n}")
    order = rng.permutation(n)
    return np.sort(order[: n // 2]), np.sort(order[n // 2 :])
