"""
Weighted (L2) spectral decomposition of a grid covariance and its contrast with the greedy one
"""
import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import List, Optional, Union

import numpy as np
import pandas as pd
from scipy import linalg

from backend.decomposition.greedy_decomposition import Decomposition, truncation_error
from backend.errors import KernelConstructionError, SourceMismatchError
from backend.kernels.covariance_kernels import Grid, GridCovariance

logger = logging.getLogger(__name__)


class QuadratureRule(str, Enum):
    TRAPEZOID = "trapezoid"
    UNIT = "unit"


def trapezoid_weights(grid: Grid) -> np.ndarray:
    """Composite trapezoid weights on the grid points (1 for a single point)"""
    points = grid.points
    if points.size == 1:
        return np.ones(1)
    gaps = np.diff(points)
    weights = np.zeros(points.size)
    weights[:-1] += 0.5 * gaps
    weights[1:] += 0.5 * gaps
    return weights


def quadrature_weights(grid: Grid, weight: Union[str, QuadratureRule, np.ndarray]) -> np.ndarray:
    if isinstance(weight, (str, QuadratureRule)):
        rule = QuadratureRule(weight)
        weights = trapezoid_weights(grid) if rule is QuadratureRule.TRAPEZOID else np.ones(grid.size)
    else:
        weights = np.asarray(weight, dtype=float).reshape(-1)
    if weights.shape != (grid.size,):
        raise KernelConstructionError(f"{weights.size} weights for a grid of {grid.size} points")
    if not np.all(weights > 0.0):
        raise KernelConstructionError("quadrature weights must be positive")
    return weights


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenpairs of R in the weighted inner product <u, v>_W = u^T W v"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    weights: np.ndarray
    source: GridCovariance

    @property
    def trace(self) -> float:
        return float(np.sum(self.eigenvalues))

    def partial_covariance(self, n: int) -> np.ndarray:
        """sum_{k <= n} lambda_k v_k v_k^T"""
        vectors = self.eigenvectors[:, : n + 1]
        return (vectors * self.eigenvalues[: n + 1]) @ vectors.T

    def weighted_norm(self, matrix: np.ndarray) -> float:
        """Operator norm of a symmetric matrix as an integral operator on L2(W)"""
        root = np.sqrt(self.weights)
        return float(np.max(np.abs(linalg.eigvalsh(root[:, None] * matrix * root[None, :])), initial=0.0))

    def truncation_error(self, n: int) -> float:
        """Weighted operator-norm error after n + 1 terms, equal to the next eigenvalue"""
        return float(self.eigenvalues[n + 1]) if n + 1 < self.eigenvalues.size else 0.0


def spectral_decompose(
    cov: GridCovariance,
    weight: Union[str, QuadratureRule, np.ndarray] = QuadratureRule.TRAPEZOID,
) -> SpectralDecomposition:
    """Eigen-decomposition of W^{1/2} R W^{1/2}, eigenvalues sorted descending"""
    weights = quadrature_weights(cov.grid, weight)
    root = np.sqrt(weights)
    eigenvalues, vectors = linalg.eigh(root[:, None] * cov.matrix * root[None, :])
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    eigenvectors = vectors[:, order] / root[:, None]
    logger.debug(f"Spectral decomposition: leading eigenvalue {eigenvalues[0]:.6e}")
    return SpectralDecomposition(eigenvalues=eigenvalues, eigenvectors=eigenvectors, weights=weights, source=cov)


@dataclass
class ComparisonRow:
    n: int
    greedy_lambda: float
    spectral_lambda: float
    greedy_partial_sum: float
    spectral_partial_sum: float
    greedy_max_entry_error: float
    spectral_max_entry_error: float
    greedy_weighted_error: float
    spectral_weighted_error: float


@dataclass
class ComparisonReport:
    """Side-by-side diagnostics; each method keeps its own error norm"""
    rows: List[ComparisonRow] = field(default_factory=list)
    spectral_trace: float = 0.0
    weighted_diagonal_sum: float = 0.0
    greedy_exceeds_trace_from: Optional[int] = None

    @property
    def diverging(self) -> bool:
        return self.greedy_exceeds_trace_from is not None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(row) for row in self.rows])


def _same_source(first: GridCovariance, second: GridCovariance) -> bool:
    return (
        first.size == second.size
        and np.array_equal(first.grid.points, second.grid.points)
        and np.array_equal(first.matrix, second.matrix)
    )


def compare_decompositions(greedy: Decomposition, spectral: SpectralDecomposition, n: int) -> ComparisonReport:
    """Rows 0..n of lambda, partial sums and both truncation errors for each method"""
    if not _same_source(greedy.source, spectral.source):
        raise SourceMismatchError("greedy and spectral decompositions come from different covariances")
    greedy.check_step(n)

    source = greedy.source.matrix
    greedy_sums = np.cumsum(greedy.lambdas)
    spectral_sums = np.cumsum(spectral.eigenvalues)
    trace = spectral.trace
    rows = []
    for k in range(n + 1):
        spectral_gap = source - spectral.partial_covariance(k)
        rows.append(
            ComparisonRow(
                n=k,
                greedy_lambda=float(greedy.lambdas[k]),
                spectral_lambda=float(spectral.eigenvalues[k]),
                greedy_partial_sum=float(greedy_sums[k]),
                spectral_partial_sum=float(spectral_sums[k]),
                greedy_max_entry_error=truncation_error(greedy, k),
                spectral_max_entry_error=float(np.max(np.abs(spectral_gap))),
                greedy_weighted_error=spectral.weighted_norm(source - greedy.partial_covariance(k)),
                spectral_weighted_error=spectral.truncation_error(k),
            )
        )

    exceeding = np.flatnonzero(greedy_sums[: n + 1] > trace)
    report = ComparisonReport(
        rows=rows,
        spectral_trace=trace,
        weighted_diagonal_sum=float(spectral.weights @ greedy.source.diagonal),
        greedy_exceeds_trace_from=int(exceeding[0]) if exceeding.size else None,
    )
    logger.info(
        f"Compared {n + 1} terms: greedy sum {greedy_sums[n]:.4f} vs spectral trace {trace:.4f}"
    )
    return report
