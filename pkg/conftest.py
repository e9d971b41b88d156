"""
Shared pytest fixtures: random covariance factory and dyadic Wiener decompositions
"""
from functools import lru_cache
from typing import Optional

import numpy as np
import pytest

from backend.decomposition.greedy_decomposition import decompose
from backend.kernels.covariance_kernels import Grid, GridCovariance, KernelSpec, discretize


def random_psd_matrix(rng: np.random.Generator, size: int, rank: Optional[int] = None) -> np.ndarray:
    """Well-conditioned A A^T / k + 0.1 I, or an exact rank-k Gram matrix"""
    if rank is None:
        factor = rng.standard_normal((size, size))
        matrix = factor @ factor.T / size + 0.1 * np.eye(size)
    else:
        factor = rng.standard_normal((size, rank))
        matrix = factor @ factor.T
    return 0.5 * (matrix + matrix.T)


def random_covariance(rng: np.random.Generator, size: int, rank: Optional[int] = None) -> GridCovariance:
    return discretize(KernelSpec.user_matrix(random_psd_matrix(rng, size, rank)))


def pivoted_cholesky(matrix, max_steps, floor):
    """Row-wise diagonally pivoted partial Cholesky; returns (lambdas, pivots, directions)"""
    size = matrix.shape[0]
    diagonal = np.diag(matrix).copy()
    rows = np.zeros((0, size))
    lambdas, pivots, directions = [], [], []
    for _ in range(max_steps):
        pivot = int(np.argmax(diagonal))
        lam = diagonal[pivot]
        if lam <= floor:
            break
        row = (matrix[pivot] - rows[:, pivot] @ rows) / np.sqrt(lam)
        rows = np.vstack([rows, row])
        diagonal = np.clip(diagonal - row ** 2, 0.0, None)
        diagonal[pivots + [pivot]] = 0.0
        lambdas.append(lam)
        pivots.append(pivot)
        directions.append(row / np.sqrt(lam))
    return np.array(lambdas), pivots, np.array(directions)


@lru_cache(maxsize=None)
def wiener_decomposition(level: int, steps: Optional[int] = None):
    steps = 2 ** level if steps is None else steps
    source = discretize(KernelSpec.brownian_motion(), Grid.dyadic(level))
    return decompose(source, max_steps=steps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def psd_factory():
    return random_covariance


@pytest.fixture
def wiener():
    """Factory for cached Wiener decompositions on dyadic grids"""
    return wiener_decomposition


@pytest.fixture(autouse=True)
def artifact_dir(tmp_path, monkeypatch):
    """Keep artifacts written during tests out of the working tree"""
    from config import settings

    monkeypatch.setattr(settings, "OUTPUT_DIRECTORY", str(tmp_path / "runs"))
    return tmp_path / "runs"
