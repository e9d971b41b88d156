"""
Greedy Karhunen-Loeve decomposition of a grid covariance in the sup-norm geometry.

Each step maximizes the variance <R f, f> over the dual unit ball (the l1 ball of
Dirac combinations), whose maximum sits at an extreme point +/- delta_t, i.e. at the
largest diagonal entry. The chosen direction x_n = R delta_p / lambda_n is then split
off by a rank-one downdate, which leaves the residual covariance of the measure
conditioned on the pivot value.
"""
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from backend.decomposition.dual_basis import dual_vectors
from backend.errors import DegeneratePivotError, NumericalInvariantError, StepIndexError
from backend.kernels.covariance_kernels import DualFunctional, GridCovariance, check_psd
from config import settings

logger = logging.getLogger(__name__)


class TerminationReason(str, Enum):
    """Why decompose stopped"""
    STEP_LIMIT = "step_limit"
    RANK_EXHAUSTED = "rank_exhausted"
    TOLERANCE_REACHED = "tolerance_reached"


@dataclass(frozen=True, eq=False)
class SplitResult:
    """Rank-one component split off a residual covariance"""
    lam: float
    pivot_index: int
    f: DualFunctional
    x: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return np.sqrt(self.lam) * self.x


@dataclass(frozen=True, eq=False)
class DecompositionStep:
    """One iteration: variance, pivot functional, direction and dual vector"""
    lam: float
    pivot_index: int
    pivot_t: float
    f: DualFunctional
    x: np.ndarray
    residual_variance: np.ndarray
    residual_max_entry: float
    pivot_sign: int = 1
    x_star: Optional[DualFunctional] = None

    @property
    def h(self) -> np.ndarray:
        """Unit Cameron-Martin vector sqrt(lambda) x"""
        return np.sqrt(self.lam) * self.x

    @property
    def h_star(self) -> Optional[DualFunctional]:
        if self.x_star is None:
            return None
        return self.x_star.scaled(1.0 / np.sqrt(self.lam))


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Ordered greedy steps plus the terminal residual covariance"""
    source: GridCovariance
    steps: Tuple[DecompositionStep, ...]
    residual: GridCovariance
    termination: TerminationReason
    lambda_tol: float = 0.0

    @property
    def grid(self):
        return self.source.grid

    @property
    def rank(self) -> int:
        return len(self.steps)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([step.lam for step in self.steps])

    @property
    def pivot_indices(self) -> List[int]:
        return [step.pivot_index for step in self.steps]

    @property
    def pivot_times(self) -> List[float]:
        return [step.pivot_t for step in self.steps]

    @property
    def directions(self) -> np.ndarray:
        """Rows are the directions x_n"""
        if not self.steps:
            return np.zeros((0, self.source.size))
        return np.vstack([step.x for step in self.steps])

    def check_step(self, n: int) -> None:
        if not 0 <= n < len(self.steps):
            raise StepIndexError(f"step {n} outside the {len(self.steps)} recorded steps")

    def partial_covariance(self, n: int) -> np.ndarray:
        """sum_{k <= n} lambda_k x_k x_k^T (zero for n = -1)"""
        if n >= 0:
            self.check_step(n)
        directions = self.directions[: n + 1]
        partial = (directions.T * self.lambdas[: n + 1]) @ directions
        return 0.5 * (partial + partial.T)

    def residual_after(self, n: int) -> GridCovariance:
        """Residual covariance once steps 0..n are split off (the source for n = -1)"""
        if n == -1:
            return self.source
        self.check_step(n)
        if n == len(self.steps) - 1:
            return self.residual
        later = self.directions[n + 1:]
        restored = (later.T * self.lambdas[n + 1:]) @ later
        matrix = self.residual.matrix + 0.5 * (restored + restored.T)
        used = self.pivot_indices[: n + 1]
        matrix[used, :] = 0.0
        matrix[:, used] = 0.0
        return GridCovariance(matrix, self.grid)

    def reconstruction_error(self) -> float:
        """max |source - sum lambda_k x_k x_k^T - residual|"""
        gap = self.source.matrix - self.partial_covariance(len(self.steps) - 1) - self.residual.matrix
        return float(np.max(np.abs(gap), initial=0.0))


def rayleigh_max(residual: GridCovariance) -> Tuple[float, int, int]:
    """Maximize <R f, f> over the dual unit ball; returns (lambda, pivot_index, sign).

    The maximum of a non-negative quadratic form over a convex ball is reached at an
    extreme point +/- delta_t, so it is the largest diagonal entry. Ties go to the
    smallest index and the sign is always +1.
    """
    diagonal = residual.diagonal
    pivot = int(np.argmax(diagonal))
    return max(float(diagonal[pivot]), 0.0), pivot, 1


def split_step(residual: GridCovariance, pivot_index: int) -> Tuple[SplitResult, GridCovariance]:
    """Split the rank-one component carried by delta_pivot off the residual"""
    matrix = residual.matrix
    if not 0 <= pivot_index < residual.size:
        raise DegeneratePivotError(f"pivot {pivot_index} outside a grid of {residual.size} points")
    lam = float(matrix[pivot_index, pivot_index])
    if not lam > 0.0:
        raise DegeneratePivotError(f"pivot {pivot_index} has variance {lam}; nothing to split")

    x = matrix[:, pivot_index] / lam
    x[pivot_index] = 1.0
    downdated = matrix - lam * np.outer(x, x)
    downdated[pivot_index, :] = 0.0
    downdated[:, pivot_index] = 0.0

    split = SplitResult(lam=lam, pivot_index=pivot_index, f=DualFunctional.dirac(pivot_index), x=x)
    return split, GridCovariance(downdated, residual.grid)


def _check_residual(residual: GridCovariance, lam: float, previous_lam: Optional[float], lam0: float) -> float:
    """Per-step invariants; returns the max absolute residual entry"""
    tol = settings.RECONSTRUCTION_TOL * lam0
    max_entry = float(np.max(np.abs(residual.matrix), initial=0.0))
    max_diagonal = max(float(np.max(residual.diagonal, initial=0.0)), 0.0)
    if max_entry > max_diagonal + tol:
        raise NumericalInvariantError(
            f"residual max entry {max_entry:.6e} exceeds its max variance {max_diagonal:.6e}"
        )
    if previous_lam is not None and lam > previous_lam + tol:
        raise NumericalInvariantError(f"lambda increased from {previous_lam:.6e} to {lam:.6e}")
    if settings.VERIFY_RESIDUAL_PSD:
        check_psd(residual.matrix, scale=lam0)
    return max_entry


def decompose(
    cov: GridCovariance,
    max_steps: Optional[int] = None,
    lambda_tol: Optional[float] = None,
) -> Decomposition:
    """Run the greedy scheme until the step limit, the tolerance or rank exhaustion.

    lambda_tol is absolute; by default it is settings.DEFAULT_LAMBDA_TOL * lambda_0.
    A lambda below 8 m eps lambda_0 is treated as an exact zero (rank exhausted).
    """
    max_steps = settings.DEFAULT_MAX_STEPS if max_steps is None else max_steps
    if max_steps < 0:
        raise ValueError(f"max_steps must be non-negative, got {max_steps}")
    lam0, _, _ = rayleigh_max(cov)
    if lambda_tol is None:
        lambda_tol = settings.DEFAULT_LAMBDA_TOL * lam0
    if lambda_tol < 0:
        raise ValueError(f"lambda_tol must be non-negative, got {lambda_tol}")
    rank_floor = 8 * cov.size * np.finfo(float).eps * lam0

    residual = cov
    steps: List[DecompositionStep] = []
    previous_lam: Optional[float] = None
    while True:
        if len(steps) >= max_steps:
            termination = TerminationReason.STEP_LIMIT
            break
        lam, pivot, sign = rayleigh_max(residual)
        if lam <= rank_floor:
            termination = TerminationReason.RANK_EXHAUSTED
            break
        if lam <= lambda_tol:
            termination = TerminationReason.TOLERANCE_REACHED
            break

        split, residual = split_step(residual, pivot)
        max_entry = _check_residual(residual, lam, previous_lam, lam0)
        steps.append(
            DecompositionStep(
                lam=split.lam,
                pivot_index=pivot,
                pivot_t=float(cov.grid.points[pivot]),
                pivot_sign=sign,
                f=split.f,
                x=split.x,
                residual_variance=residual.diagonal.copy(),
                residual_max_entry=max_entry,
            )
        )
        previous_lam = lam
        logger.debug(f"Step {len(steps) - 1}: lambda={lam:.6e} pivot t={cov.grid.points[pivot]:.6f}")

    duals = dual_vectors(steps)
    steps = [replace(step, x_star=x_star) for step, x_star in zip(steps, duals)]
    decomposition = Decomposition(
        source=cov,
        steps=tuple(steps),
        residual=residual,
        termination=termination,
        lambda_tol=float(lambda_tol),
    )

    error = decomposition.reconstruction_error()
    if error > settings.RECONSTRUCTION_TOL * max(lam0, np.finfo(float).tiny):
        raise NumericalInvariantError(f"reconstruction error {error:.3e} exceeds tolerance")
    logger.info(f"Decomposed {cov.size}-point covariance: {len(steps)} steps, {termination.value}")
    return decomposition


def truncation_error(decomposition: Decomposition, n: int) -> float:
    """Operator norm (dual ball to sup norm) of the remainder after steps 0..n.

    This is the max absolute entry of the residual, which equals lambda_{n+1}.
    """
    decomposition.check_step(n)
    return decomposition.steps[n].residual_max_entry


@dataclass
class RayleighBoundReport:
    """Double-sup check of one step against random dual-ball functionals"""
    step: int
    lam: float
    n_functionals: int
    max_ratio: float
    pivot_ratio: float
    passed: bool
    details: Dict[str, float] = field(default_factory=dict)


def rayleigh_bound_check(decomposition: Decomposition, n: int, n_functionals: int = 1000, seed: int = 0) -> RayleighBoundReport:
    """Check sqrt(lambda_n) = sup_f sup_{h in B_H(gamma_n)} <h, f> on random functionals.

    The inner sup equals sqrt(<R_n f, f>) and is attained at h = R_n f / ||R_n f||_gamma,
    so the identity reduces to <R_n f, f> <= lambda_n with equality at f_n.
    """
    decomposition.check_step(n)
    step = decomposition.steps[n]
    residual = decomposition.residual_after(n - 1)
    rng = np.random.default_rng(seed)

    functionals = rng.standard_normal((n_functionals, residual.size))
    functionals /= np.abs(functionals).sum(axis=1, keepdims=True)
    variances = np.einsum("ij,jk,ik->i", functionals, residual.matrix, functionals)
    max_ratio = float(variances.max() / step.lam) if variances.size else 0.0

    pivot_variance = residual.quadratic_form(step.f)
    pivot_ratio = pivot_variance / step.lam
    # the maximizing representer has unit Cameron-Martin norm and pairs to sqrt(lambda_n)
    representer = residual.apply(step.f) / np.sqrt(pivot_variance)
    attained = step.f.pair(representer)

    passed = max_ratio <= 1.0 + 1e-9 and abs(pivot_ratio - 1.0) <= 1e-9
    return RayleighBoundReport(
        step=n,
        lam=step.lam,
        n_functionals=n_functionals,
        max_ratio=max_ratio,
        pivot_ratio=pivot_ratio,
        passed=passed,
        details={"attained_sup": attained, "sqrt_lambda": float(np.sqrt(step.lam))},
    )
