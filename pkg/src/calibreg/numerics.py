"""Dense float64 arithmetic, seeded random streams and a finite-difference gradient oracle.

A ``Matrix`` is a 2-D ``float64`` ndarray with batch-as-rows layout: a batch of ``m``
samples with ``d`` features is an ``m x d`` array.
"""

from collections.abc import Callable, Sequence
import hashlib

from loguru import logger
import numpy as np
from numpy.typing import ArrayLike, NDArray

from calibreg.errors import DimensionMismatchError, InvalidArgumentError, NonFiniteError


Matrix = NDArray[np.float64]
Vector = NDArray[np.float64]

_MAX_SEED = 2**64


def derive_seed(seed: int, name: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{name}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """Single-owner random stream over numpy's counter-based Philox generator.

    Streams are a pure function of the 64-bit seed; ``fork`` hands independent
    named sub-streams to consumers (data, init, shuffling, dropout, projections)
    so that toggling one consumer never reshuffles another.
    """

    def __init__(self, seed: int):
        if not 0 <= int(seed) < _MAX_SEED:
            raise InvalidArgumentError(f"numerics: seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))

    def fork(self, name: str) -> "Rng":
        return Rng(derive_seed(self.seed, name))

    def normal(self, size: int | tuple[int, ...]) -> NDArray[np.float64]:
        return self._generator.standard_normal(size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size: int | tuple[int, ...] | None = None):
        return self._generator.uniform(low, high, size)

    def integers(self, low: int, high: int, size: int | tuple[int, ...] | None = None):
        return self._generator.integers(low, high, size)

    def permutation(self, n: int) -> NDArray[np.int64]:
        return self._generator.permutation(n)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"


def as_matrix(values: ArrayLike, name: str = "matrix") -> Matrix:
    array = np.asarray(values, dtype=np.float64)
    if array.ndim != 2:
        raise DimensionMismatchError(f"numerics: {name} must be 2-D, got shape {array.shape}")
    return array


def ensure_finite(values: ArrayLike, name: str = "values") -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"numerics: {name} contains NaN or Inf")


def matmul(a: ArrayLike, b: ArrayLike) -> Matrix:
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(f"numerics: cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def gaussian(rng: Rng, rows: int, cols: int) -> Matrix:
    if rows < 1 or cols < 1:
        raise InvalidArgumentError(f"numerics: gaussian matrix needs rows, cols >= 1, got {rows}x{cols}")
    return rng.normal((rows, cols))


def finite_diff_grad(f: Callable[[Vector], float], at: ArrayLike, step: float = 1e-5) -> Vector:
    """Central-difference gradient ``(f(x + h e_i) - f(x - h e_i)) / 2h`` per coordinate."""
    if step <= 0:
        raise InvalidArgumentError(f"numerics: finite-difference step must be positive, got {step}")

    x = np.array(at, dtype=np.float64).ravel()
    grad = np.zeros_like(x)

    for i in range(x.size):
        original = x[i]
        x[i] = original + step
        upper = float(f(x.copy()))
        x[i] = original - step
        lower = float(f(x.copy()))
        x[i] = original

        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise NonFiniteError(f"numerics: function is not finite around coordinate {i}")
        grad[i] = (upper - lower) / (2.0 * step)

    logger.debug(f"Finite differences over {x.size} coordinates with step {step}")
    return grad


def relative_error(analytic: ArrayLike, numeric: ArrayLike) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def flatten(arrays: Sequence[NDArray[np.float64]]) -> Vector:
    return np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)


def unflatten(flat: Vector, like: Sequence[NDArray[np.float64]]) -> list[NDArray[np.float64]]:
    arrays = []
    offset = 0
    for template in like:
        arrays.append(np.asarray(flat[offset : offset + template.size]).reshape(template.shape).copy())
        offset += template.size
    return arrays
