"""
Covariance kernels on [0, 1], their grid discretization and the characteristic functional
"""
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from backend.errors import (
    KernelConstructionError,
    KernelDomainError,
    NumericalInvariantError,
    SupportMismatchError,
)
from config import settings

logger = logging.getLogger(__name__)


class KernelKind(str, Enum):
    """Supported covariance kernels"""
    BROWNIAN_MOTION = "brownian_motion"
    BROWNIAN_BRIDGE = "brownian_bridge"
    USER_MATRIX = "user_matrix"


class KernelSpec(BaseModel):
    """JSON-serializable kernel description"""
    kind: KernelKind
    matrix: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _check_matrix(self) -> "KernelSpec":
        if self.kind is KernelKind.USER_MATRIX:
            if not self.matrix:
                raise ValueError("user_matrix kernels need a non-empty 'matrix'")
            size = len(self.matrix)
            if any(len(row) != size for row in self.matrix):
                raise ValueError(f"user matrix must be square, got {size} rows of unequal length")
        elif self.matrix is not None:
            raise ValueError(f"'matrix' is only allowed for user_matrix kernels, not {self.kind.value}")
        return self

    @property
    def is_analytic(self) -> bool:
        return self.kind is not KernelKind.USER_MATRIX

    @property
    def size(self) -> Optional[int]:
        return len(self.matrix) if self.matrix is not None else None

    @classmethod
    def brownian_motion(cls) -> "KernelSpec":
        return cls(kind=KernelKind.BROWNIAN_MOTION)

    @classmethod
    def brownian_bridge(cls) -> "KernelSpec":
        return cls(kind=KernelKind.BROWNIAN_BRIDGE)

    @classmethod
    def user_matrix(cls, matrix: Union[np.ndarray, List[List[float]]]) -> "KernelSpec":
        return cls(kind=KernelKind.USER_MATRIX, matrix=np.asarray(matrix, dtype=float).tolist())


class GridSpec(BaseModel):
    """JSON grid description: explicit points or a dyadic level"""
    points: Optional[List[float]] = None
    dyadic_level: Optional[int] = Field(default=None, ge=0, le=20)

    @model_validator(mode="after")
    def _exactly_one(self) -> "GridSpec":
        if (self.points is None) == (self.dyadic_level is None):
            raise ValueError("grid needs exactly one of 'points' or 'dyadic_level'")
        return self

    def build(self) -> "Grid":
        if self.dyadic_level is not None:
            return Grid.dyadic(self.dyadic_level)
        return Grid(np.asarray(self.points, dtype=float))


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing points of [0, 1]"""
    points: np.ndarray
    dyadic_level: Optional[int] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=float).reshape(-1)
        if points.size == 0:
            raise KernelConstructionError("grid must contain at least one point")
        if not np.all(np.isfinite(points)):
            raise KernelConstructionError("grid points must be finite")
        if points[0] < 0.0 or points[-1] > 1.0:
            raise KernelConstructionError(f"grid points must lie in [0, 1], got [{points[0]}, {points[-1]}]")
        if np.any(np.diff(points) <= 0.0):
            raise KernelConstructionError("grid points must be strictly increasing")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

    @classmethod
    def dyadic(cls, level: int) -> "Grid":
        """Uniform grid k / 2^level, k = 0..2^level"""
        if level < 0:
            raise KernelConstructionError(f"dyadic level must be non-negative, got {level}")
        return cls(np.arange(2 ** level + 1, dtype=float) / 2 ** level, dyadic_level=level)

    @classmethod
    def uniform(cls, size: int) -> "Grid":
        if size < 1:
            raise KernelConstructionError(f"grid size must be positive, got {size}")
        if size == 1:
            return cls(np.array([1.0]))
        return cls(np.linspace(0.0, 1.0, size))

    @property
    def size(self) -> int:
        return int(self.points.size)

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to t (up to 1e-12)"""
        matches = np.flatnonzero(np.abs(self.points - t) <= 1e-12)
        if matches.size == 0:
            raise KernelDomainError(f"t={t} is not a grid point")
        return int(matches[0])

    def contains_dyadic(self, level: int) -> bool:
        """True when every k / 2^level is a grid point"""
        targets = np.arange(2 ** level + 1, dtype=float) / 2 ** level
        return bool(np.all(np.min(np.abs(self.points[None, :] - targets[:, None]), axis=1) <= 1e-12))

    def to_dict(self) -> Dict:
        if self.dyadic_level is not None:
            return {"dyadic_level": self.dyadic_level, "points": self.points.tolist()}
        return {"points": self.points.tolist()}


@dataclass(frozen=True)
class DualFunctional:
    """Finite signed combination of Dirac masses, indexed by grid position"""
    coefficients: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "coefficients", {int(i): float(w) for i, w in sorted(self.coefficients.items())}
        )

    @classmethod
    def dirac(cls, index: int, weight: float = 1.0) -> "DualFunctional":
        return cls({index: weight})

    @classmethod
    def zero(cls) -> "DualFunctional":
        return cls({})

    @classmethod
    def from_dense(cls, weights: Iterable[float]) -> "DualFunctional":
        return cls({i: w for i, w in enumerate(weights) if w != 0.0})

    @property
    def support(self) -> np.ndarray:
        return np.fromiter(self.coefficients.keys(), dtype=int, count=len(self.coefficients))

    @property
    def weights(self) -> np.ndarray:
        return np.fromiter(self.coefficients.values(), dtype=float, count=len(self.coefficients))

    @property
    def norm(self) -> float:
        """Total variation (the X* norm)"""
        return float(np.abs(self.weights).sum())

    def check_support(self, size: int) -> None:
        support = self.support
        if support.size and (support.min() < 0 or support.max() >= size):
            raise SupportMismatchError(
                f"functional supported on indices {support.tolist()} outside a grid of {size} points"
            )

    def to_dense(self, size: int) -> np.ndarray:
        self.check_support(size)
        dense = np.zeros(size)
        dense[self.support] = self.weights
        return dense

    def pair(self, x: np.ndarray) -> float:
        """Duality pairing <x, f>"""
        x = np.asarray(x, dtype=float)
        self.check_support(x.shape[-1])
        if not self.coefficients:
            return 0.0
        return float(x[self.support] @ self.weights)

    def scaled(self, factor: float) -> "DualFunctional":
        return DualFunctional({i: factor * w for i, w in self.coefficients.items()})

    def combine(self, other: "DualFunctional", factor: float = 1.0) -> "DualFunctional":
        """self + factor * other"""
        merged = dict(self.coefficients)
        for i, w in other.coefficients.items():
            merged[i] = merged.get(i, 0.0) + factor * w
        return DualFunctional(merged)

    def to_dict(self) -> Dict[str, float]:
        return {str(i): w for i, w in self.coefficients.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "DualFunctional":
        return cls({int(i): float(w) for i, w in data.items()})


def check_psd(matrix: np.ndarray, scale: Optional[float] = None, rel_tol: Optional[float] = None) -> float:
    """Return the smallest eigenvalue, raising when it is below -rel_tol * scale"""
    rel_tol = settings.PSD_RELATIVE_TOL if rel_tol is None else rel_tol
    if scale is None:
        scale = float(np.max(np.diag(matrix), initial=0.0))
    min_eigenvalue = float(np.linalg.eigvalsh(matrix)[0]) if matrix.size else 0.0
    if min_eigenvalue < -rel_tol * scale:
        raise NumericalInvariantError(
            f"matrix is not positive semi-definite: min eigenvalue {min_eigenvalue:.3e} "
            f"below -{rel_tol:.0e} x {scale:.3e}"
        )
    return min_eigenvalue


@dataclass(frozen=True, eq=False)
class GridCovariance:
    """Symmetric PSD covariance matrix over a grid"""
    matrix: np.ndarray
    grid: Grid

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise KernelConstructionError(f"covariance must be a square matrix, got shape {matrix.shape}")
        if matrix.shape[0] != self.grid.size:
            raise KernelConstructionError(
                f"covariance of size {matrix.shape[0]} does not match a grid of {self.grid.size} points"
            )
        if not np.array_equal(matrix, matrix.T):
            raise KernelConstructionError("covariance matrix must be exactly symmetric")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix)

    @property
    def max_variance(self) -> float:
        return float(np.max(self.diagonal))

    def validate_psd(self, scale: Optional[float] = None) -> float:
        return check_psd(self.matrix, scale=scale)

    def quadratic_form(self, f: DualFunctional, g: Optional[DualFunctional] = None) -> float:
        """C(f, g) = f^T R g using only the supports"""
        g = f if g is None else g
        f.check_support(self.size)
        g.check_support(self.size)
        if not f.coefficients or not g.coefficients:
            return 0.0
        block = self.matrix[np.ix_(f.support, g.support)]
        return float(f.weights @ block @ g.weights)

    def apply(self, f: DualFunctional) -> np.ndarray:
        """R f as a vector over the grid"""
        f.check_support(self.size)
        if not f.coefficients:
            return np.zeros(self.size)
        return self.matrix[:, f.support] @ f.weights


def eval_kernel(spec: KernelSpec, s: Union[float, int], t: Union[float, int]) -> float:
    """Evaluate K(s, t); grid indices for user matrices"""
    if spec.kind is KernelKind.USER_MATRIX:
        size = spec.size
        for value in (s, t):
            if not math.isfinite(value) or int(value) != value or not 0 <= int(value) < size:
                raise KernelDomainError(f"user matrix index {value} outside 0..{size - 1}")
        i, j = int(s), int(t)
        return 0.5 * (spec.matrix[i][j] + spec.matrix[j][i])

    for value in (s, t):
        if not (0.0 <= value <= 1.0) or math.isnan(value):
            raise KernelDomainError(f"kernel argument {value} outside [0, 1]")
    if spec.kind is KernelKind.BROWNIAN_MOTION:
        return float(min(s, t))
    return float(min(s, t) - s * t)


def _analytic_matrix(kind: KernelKind, points: np.ndarray) -> np.ndarray:
    minimum = np.minimum.outer(points, points)
    if kind is KernelKind.BROWNIAN_MOTION:
        return minimum
    return minimum - np.outer(points, points)


def discretize(spec: KernelSpec, grid: Optional[Grid] = None) -> GridCovariance:
    """Covariance matrix of the kernel on the grid"""
    if spec.is_analytic:
        if grid is None:
            raise KernelConstructionError(f"{spec.kind.value} needs a grid")
        cov = GridCovariance(_analytic_matrix(spec.kind, grid.points), grid)
        cov.validate_psd()
        return cov

    raw = np.asarray(spec.matrix, dtype=float)
    grid = Grid.uniform(raw.shape[0]) if grid is None else grid
    if raw.shape[0] != grid.size:
        raise KernelConstructionError(
            f"user matrix of size {raw.shape[0]} does not match a grid of {grid.size} points"
        )
    if not np.all(np.isfinite(raw)):
        raise KernelConstructionError("user matrix contains non-finite entries")
    scale = float(np.max(np.abs(raw), initial=0.0))
    asymmetry = float(np.max(np.abs(raw - raw.T), initial=0.0))
    if asymmetry > settings.SYMMETRY_RELATIVE_TOL * max(scale, 1.0):
        raise KernelConstructionError(f"user matrix is not symmetric (max asymmetry {asymmetry:.3e})")
    matrix = 0.5 * (raw + raw.T)
    if np.any(np.diag(matrix) < -settings.PSD_RELATIVE_TOL * scale):
        raise KernelConstructionError("user matrix has negative diagonal entries")
    cov = GridCovariance(matrix, grid)
    try:
        cov.validate_psd()
    except NumericalInvariantError as e:
        raise KernelConstructionError(f"user matrix rejected: {e}") from e
    logger.debug(f"Discretized user matrix of size {grid.size}")
    return cov


def characteristic_functional(cov: GridCovariance, f: DualFunctional) -> float:
    """exp(-C(f, f) / 2)"""
    return math.exp(-0.5 * max(cov.quadratic_form(f), 0.0))
