"""
Analytic Levy-Ciesielski reference for the Wiener measure on [0, 1]
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np

from backend.decomposition.greedy_decomposition import decompose
from backend.errors import KernelDomainError, OracleRangeError
from backend.kernels.covariance_kernels import Grid, KernelSpec, discretize
from backend.sampling.kl_sampler import KL_STREAM, gaussian_draws

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

LAMBDA_RTOL = 1e-12
X_ATOL = 1e-10


@dataclass(frozen=True)
class LevyIndex:
    """n = 2^p + k with 0 <= k < 2^p; p and k are None for n = 0"""
    n: int
    p: Optional[int] = None
    k: Optional[int] = None

    @classmethod
    def from_index(cls, n: int) -> "LevyIndex":
        if n < 0:
            raise KernelDomainError(f"Levy index must be non-negative, got {n}")
        if n == 0:
            return cls(0)
        p = int(n).bit_length() - 1
        return cls(n, p, n - 2 ** p)

    @property
    def left(self) -> float:
        return self.k / 2 ** self.p

    @property
    def peak(self) -> float:
        return (2 * self.k + 1) / 2 ** (self.p + 1)

    @property
    def right(self) -> float:
        return (self.k + 1) / 2 ** self.p


def _check_unit_interval(t: ArrayLike) -> np.ndarray:
    values = np.asarray(t, dtype=float)
    if np.any(~((values >= 0.0) & (values <= 1.0))):
        raise KernelDomainError("argument outside [0, 1]")
    return values


def levy_lambda(n: int) -> float:
    """1 for n = 0, otherwise 2^-(p + 2)"""
    index = LevyIndex.from_index(n)
    if index.p is None:
        return 1.0
    return 2.0 ** -(index.p + 2)


def schauder_x(n: int, t: ArrayLike) -> ArrayLike:
    """x_0(t) = t; for n >= 1 the unit-height hat on [k / 2^p, (k + 1) / 2^p]"""
    index = LevyIndex.from_index(n)
    values = _check_unit_interval(t)
    if index.p is None:
        result = values.copy()
    else:
        result = np.clip(1.0 - np.abs(values - index.peak) * 2 ** (index.p + 1), 0.0, None)
    return float(result) if result.ndim == 0 else result


def haar_h_prime(n: int, s: ArrayLike) -> ArrayLike:
    """Derivative of h_n = sqrt(lambda_n) x_n; the Haar function for n >= 1 and 1 for n = 0"""
    index = LevyIndex.from_index(n)
    values = _check_unit_interval(s)
    if index.p is None:
        result = np.ones_like(values)
    else:
        height = np.sqrt(2.0 ** index.p)
        rising = (values >= index.left) & (values <= index.peak)
        falling = (values > index.peak) & (values <= index.right)
        result = np.where(rising, height, np.where(falling, -height, 0.0))
    return float(result) if result.ndim == 0 else result


def expected_pivot(n: int) -> float:
    """t_0 = 1, otherwise the hat peak (2k + 1) / 2^(p + 1)"""
    index = LevyIndex.from_index(n)
    return 1.0 if index.p is None else index.peak


def levy_level_partial_sum(p: int) -> float:
    """sum of lambda_n over levels 0..p, i.e. 1 + (p + 1) / 4"""
    if p < 0:
        raise KernelDomainError(f"level must be non-negative, got {p}")
    return 1.0 + (p + 1) / 4.0


def schauder_matrix(grid: Grid, n_terms: int) -> np.ndarray:
    """Rows x_0..x_{n_terms - 1} evaluated on the grid"""
    if n_terms < 0:
        raise KernelDomainError(f"n_terms must be non-negative, got {n_terms}")
    if n_terms == 0:
        return np.zeros((0, grid.size))
    return np.vstack([schauder_x(n, grid.points) for n in range(n_terms)])


def levy_ciesielski_paths(grid: Grid, n_terms: int, n_samples: int, seed: int) -> np.ndarray:
    """Truncated Levy-Ciesielski paths sum_n sqrt(lambda_n) xi_n x_n, one row per path.

    Uses the same stream family as the engine sampler, so matching expansions give
    matching paths for the same seed.
    """
    scales = np.sqrt([levy_lambda(n) for n in range(n_terms)])
    factor = scales[:, None] * schauder_matrix(grid, n_terms)
    return gaussian_draws(factor, n_samples, seed, KL_STREAM)


@dataclass
class OracleReport:
    """Engine-vs-oracle deviations on a dyadic grid"""
    level: int
    n_terms: int
    max_lambda_error: float
    max_pivot_mismatch: float
    max_x_error: float
    max_partial_sum_error: float
    passed: bool
    lambdas: List[float] = field(default_factory=list)
    pivots: List[float] = field(default_factory=list)


def compare_with_engine(level: int, n_terms: Optional[int] = None) -> OracleReport:
    """Run the greedy engine on Brownian motion over the level-J dyadic grid and compare"""
    grid = Grid.dyadic(level)
    limit = 2 ** level
    n_terms = limit if n_terms is None else n_terms
    if n_terms > limit:
        raise OracleRangeError(
            f"a level-{level} grid resolves {limit} Levy-Ciesielski terms, {n_terms} requested"
        )
    if n_terms < 1:
        raise OracleRangeError(f"n_terms must be positive, got {n_terms}")

    decomposition = decompose(discretize(KernelSpec.brownian_motion(), grid), max_steps=n_terms)
    if decomposition.rank < n_terms:
        logger.warning(f"Engine stopped after {decomposition.rank} of {n_terms} steps")
        return OracleReport(level, n_terms, float("inf"), float("inf"), float("inf"), float("inf"), False)

    expected_lambdas = np.array([levy_lambda(n) for n in range(n_terms)])
    lambda_error = float(np.max(np.abs(decomposition.lambdas - expected_lambdas) / expected_lambdas))
    expected_pivots = np.array([expected_pivot(n) for n in range(n_terms)])
    pivot_mismatch = float(np.max(np.abs(np.array(decomposition.pivot_times) - expected_pivots)))
    x_error = float(np.max(np.abs(decomposition.directions - schauder_matrix(grid, n_terms))))

    # complete levels 0..p use the first 2^(p + 1) terms
    partial_sum_error = 0.0
    partial_sums = np.cumsum(decomposition.lambdas)
    for p in range(level):
        last = 2 ** (p + 1) - 1
        if last >= n_terms:
            break
        partial_sum_error = max(partial_sum_error, abs(partial_sums[last] - levy_level_partial_sum(p)))

    passed = (
        lambda_error <= LAMBDA_RTOL
        and pivot_mismatch == 0.0
        and x_error <= X_ATOL
        and partial_sum_error <= LAMBDA_RTOL * partial_sums[-1]
    )
    logger.info(
        f"Oracle check level {level}, {n_terms} terms: lambda {lambda_error:.2e}, "
        f"pivot {pivot_mismatch:.2e}, x {x_error:.2e}"
    )
    return OracleReport(
        level=level,
        n_terms=n_terms,
        max_lambda_error=lambda_error,
        max_pivot_mismatch=pivot_mismatch,
        max_x_error=x_error,
        max_partial_sum_error=float(partial_sum_error),
        passed=bool(passed),
        lambdas=decomposition.lambdas.tolist(),
        pivots=list(decomposition.pivot_times),
    )
