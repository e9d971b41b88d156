"""
Truncated Karhunen-Loeve sampling, empirical covariances and the convolution check
"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict

import numpy as np
from scipy import linalg

from backend.errors import NumericalInvariantError, SamplingError
from backend.kernels.covariance_kernels import Grid, GridCovariance
from config import settings

if TYPE_CHECKING:
    from backend.decomposition.greedy_decomposition import Decomposition

logger = logging.getLogger(__name__)

KL_STREAM = 0
RESIDUAL_STREAM = 1
DIRECT_STREAM = 2


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Paths drawn from a truncated expansion, one row per path"""
    paths: np.ndarray
    n_terms: int
    seed: int
    grid: Grid

    @property
    def n_samples(self) -> int:
        return int(self.paths.shape[0])


@dataclass
class ConvolutionReport:
    """Exact and Monte-Carlo checks of R = R_{lambda_0..lambda_n} + R_{gamma_{n+1}}"""
    step: int
    exact_max_error: float
    exact_tolerance: float
    mc_max_error: float
    mc_tolerance: float
    n_samples: int
    max_pinned_residual_variance: float
    passed: bool


def worker_count() -> int:
    threads = settings.BANACH_KL_THREADS
    return threads if threads > 0 else (os.cpu_count() or 1)


def stream_generator(seed: int, purpose: int, chunk: int) -> np.random.Generator:
    """Independent generator for one (purpose, chunk) stream of a seed"""
    bit_generator = getattr(np.random, settings.SAMPLER_BIT_GENERATOR)
    return np.random.Generator(bit_generator(np.random.SeedSequence(seed, spawn_key=(purpose, chunk))))


def gaussian_draws(factor: np.ndarray, n_samples: int, seed: int, purpose: int = KL_STREAM) -> np.ndarray:
    """Rows xi @ factor with xi i.i.d. standard normal.

    Streams are tied to fixed-size chunks, so the result does not depend on the
    number of worker threads.
    """
    if n_samples < 1:
        raise SamplingError(f"n_samples must be positive, got {n_samples}")
    chunk_size = settings.SAMPLE_CHUNK_SIZE
    bounds = [(start, min(start + chunk_size, n_samples)) for start in range(0, n_samples, chunk_size)]

    def draw(chunk: int) -> np.ndarray:
        start, stop = bounds[chunk]
        xi = stream_generator(seed, purpose, chunk).standard_normal((stop - start, factor.shape[0]))
        return xi @ factor

    with ThreadPoolExecutor(max_workers=min(worker_count(), len(bounds))) as pool:
        blocks = list(pool.map(draw, range(len(bounds))))
    return np.vstack(blocks)


def covariance_factor(cov: GridCovariance, scale: float) -> np.ndarray:
    """F with F^T F = R from an eigenvalue-floored factorization.

    Eigenvalues below -PSD_RELATIVE_TOL * scale are an error, smaller negative ones are
    clamped to 0. Columns at zero-variance grid points are zeroed so pinned values are
    reproduced exactly.
    """
    eigenvalues, eigenvectors = linalg.eigh(cov.matrix)
    floor = -settings.PSD_RELATIVE_TOL * scale
    if eigenvalues.size and eigenvalues[0] < floor:
        raise NumericalInvariantError(f"covariance has eigenvalue {eigenvalues[0]:.3e} below {floor:.3e}")
    clamped = int(np.sum(eigenvalues < 0.0))
    if clamped:
        logger.debug(f"Clamped {clamped} slightly negative eigenvalues to zero")
    keep = eigenvalues > 0.0
    factor = (eigenvectors[:, keep] * np.sqrt(eigenvalues[keep])).T
    factor[:, cov.diagonal <= 0.0] = 0.0
    return factor


def sample_paths(decomposition: "Decomposition", n_terms: int, n_samples: int, seed: int) -> SampleBatch:
    """Paths sum_{k < n_terms} sqrt(lambda_k) xi_k x_k"""
    if not 0 <= n_terms <= decomposition.rank:
        raise SamplingError(f"n_terms={n_terms} exceeds the {decomposition.rank} recorded steps")
    factor = np.sqrt(decomposition.lambdas[:n_terms])[:, None] * decomposition.directions[:n_terms]
    paths = gaussian_draws(factor, n_samples, seed, KL_STREAM)
    logger.info(f"Drew {n_samples} paths from {n_terms} expansion terms (seed {seed})")
    return SampleBatch(paths=paths, n_terms=n_terms, seed=seed, grid=decomposition.grid)


def empirical_covariance(batch: SampleBatch) -> GridCovariance:
    """Unbiased sample covariance of the paths"""
    if batch.n_samples < 2:
        raise SamplingError(f"need at least 2 samples for a covariance, got {batch.n_samples}")
    centered = batch.paths - batch.paths.mean(axis=0)
    estimate = centered.T @ centered / (batch.n_samples - 1)
    return GridCovariance(0.5 * (estimate + estimate.T), batch.grid)


def sample_summary(decomposition: "Decomposition", batch: SampleBatch) -> Dict[str, Any]:
    """JSON summary of a batch against its truncated covariance"""
    target = decomposition.partial_covariance(batch.n_terms - 1)
    max_cov_error = None
    if batch.n_samples >= 2:
        max_cov_error = float(np.max(np.abs(empirical_covariance(batch).matrix - target)))
    return {
        "n_terms": batch.n_terms,
        "n_samples": batch.n_samples,
        "seed": batch.seed,
        "max_cov_error": max_cov_error,
    }


def convolution_check(decomposition: "Decomposition", n: int, n_samples: int, seed: int) -> ConvolutionReport:
    """Check gamma = gamma_{lambda_0..lambda_n} * gamma_{n+1} exactly and by sampling"""
    decomposition.check_step(n)
    source = decomposition.source
    lam0 = float(decomposition.lambdas[0])
    partial = decomposition.partial_covariance(n)
    residual = decomposition.residual_after(n)

    exact_error = float(np.max(np.abs(source.matrix - partial - residual.matrix)))
    exact_tol = settings.RECONSTRUCTION_TOL * lam0

    truncated = sample_paths(decomposition, n + 1, n_samples, seed).paths
    residual_paths = gaussian_draws(covariance_factor(residual, lam0), n_samples, seed, RESIDUAL_STREAM)
    combined = SampleBatch(paths=truncated + residual_paths, n_terms=n + 1, seed=seed, grid=source.grid)
    mc_error = float(np.max(np.abs(empirical_covariance(combined).matrix - source.matrix)))
    # six standard errors of a sample variance at variance lambda_0
    mc_tol = 6.0 * np.sqrt(2.0) * lam0 / np.sqrt(n_samples)

    pivots = decomposition.pivot_indices[: n + 1]
    pinned_variance = float(np.max(np.var(residual_paths[:, pivots], axis=0)))

    passed = exact_error <= exact_tol and mc_error <= mc_tol
    logger.info(
        f"Convolution check at step {n}: exact {exact_error:.3e} (tol {exact_tol:.1e}), "
        f"MC {mc_error:.3e} (tol {mc_tol:.1e})"
    )
    return ConvolutionReport(
        step=n,
        exact_max_error=exact_error,
        exact_tolerance=exact_tol,
        mc_max_error=mc_error,
        mc_tolerance=mc_tol,
        n_samples=n_samples,
        max_pinned_residual_variance=pinned_variance,
        passed=passed,
    )
