"""
Biorthogonal dual functionals, the projections P_n and Cameron-Martin inner products
"""
import logging
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, List, Sequence, Tuple

import numpy as np

from backend.errors import DimensionMismatchError, StepIndexError
from backend.kernels.covariance_kernels import DualFunctional, GridCovariance
from config import settings

if TYPE_CHECKING:
    from backend.decomposition.greedy_decomposition import Decomposition, DecompositionStep

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    """P_n x together with its coordinates <x, x*_k>"""
    projected: np.ndarray
    coefficients: np.ndarray
    formula_gap: float = 0.0


@dataclass
class BiorthogonalityReport:
    """Max deviations of the dual basis from its defining identities"""
    n_steps: int
    max_pairing_deviation: float
    max_covariance_deviation: float
    max_representer_deviation: float
    max_h_norm_deviation: float
    pairing_tolerance: float
    covariance_tolerance: float
    passed: bool


def dual_vectors(steps: Sequence["DecompositionStep"]) -> List[DualFunctional]:
    """x*_0 = f_0, x*_n = f_n - sum_{k<n} <x_k, f_n> x*_k"""
    duals: List[DualFunctional] = []
    for n, step in enumerate(steps):
        x_star = step.f
        for k in range(n):
            x_star = x_star.combine(duals[k], -step.f.pair(steps[k].x))
        duals.append(x_star)
    return duals


def h_star(step: "DecompositionStep") -> DualFunctional:
    """Standard-normal coordinate lambda_n^{-1/2} x*_n"""
    x_star = step.x_star if step.x_star is not None else step.f
    return x_star.scaled(1.0 / np.sqrt(step.lam))


def _ensure_duals(steps: Sequence["DecompositionStep"]) -> List[DualFunctional]:
    if all(step.x_star is not None for step in steps):
        return [step.x_star for step in steps]
    return dual_vectors(steps)


def project(steps: Sequence["DecompositionStep"], x: np.ndarray, n: int) -> ProjectionResult:
    """P_n x by the dual-coefficient formula, cross-checked against the recursive one"""
    if not 0 <= n < len(steps):
        raise StepIndexError(f"projection order {n} outside the {len(steps)} recorded steps")
    x = np.asarray(x, dtype=float)
    size = steps[0].x.size
    if x.shape != (size,):
        raise DimensionMismatchError(f"vector of shape {x.shape} does not match a grid of {size} points")

    duals = _ensure_duals(steps[: n + 1])
    coefficients = np.array([x_star.pair(x) for x_star in duals])
    directions = np.vstack([step.x for step in steps[: n + 1]])
    projected = coefficients @ directions

    recursive = np.zeros(size)
    for step in steps[: n + 1]:
        recursive = recursive + step.f.pair(x - recursive) * step.x

    scale = max(float(np.max(np.abs(x), initial=0.0)), 1.0)
    gap = float(np.max(np.abs(projected - recursive)))
    if gap > settings.PROJECTION_TOL * scale:
        logger.warning(f"Projection formulas disagree by {gap:.3e} at order {n}")
    return ProjectionResult(projected=projected, coefficients=coefficients, formula_gap=gap)


def cm_inner(cov: GridCovariance, c: DualFunctional, d: DualFunctional) -> float:
    """<R c, R d>_gamma = c^T R d"""
    return cov.quadratic_form(c, d)


def project_representer(decomposition: "Decomposition", f: DualFunctional, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Q_n (R f) in H(gamma) and P_n (R f) in X; they coincide on H(gamma)"""
    decomposition.check_step(n)
    steps = decomposition.steps[: n + 1]
    orthogonal = np.zeros(decomposition.source.size)
    for step in steps:
        orthogonal = orthogonal + step.lam * f.pair(step.x) * step.x
    banach = project(decomposition.steps, decomposition.source.apply(f), n).projected
    return orthogonal, banach


def verify_biorthogonality(decomposition: "Decomposition") -> BiorthogonalityReport:
    """Pairings <x_j, x*_k>, the covariance Gram matrix and R x*_n = lambda_n x_n"""
    steps = decomposition.steps
    source = decomposition.source
    lam0 = float(steps[0].lam) if steps else 0.0
    pairing_tol = settings.BIORTHOGONALITY_TOL
    covariance_tol = settings.BIORTHOGONALITY_TOL * lam0
    if not steps:
        return BiorthogonalityReport(0, 0.0, 0.0, 0.0, 0.0, pairing_tol, covariance_tol, True)

    duals = _ensure_duals(steps)
    steps = [step if step.x_star is not None else replace(step, x_star=x_star) for step, x_star in zip(steps, duals)]
    size = source.size
    directions = np.vstack([step.x for step in steps])
    dual_matrix = np.vstack([x_star.to_dense(size) for x_star in duals])
    lambdas = np.array([step.lam for step in steps])

    pairings = directions @ dual_matrix.T
    pairing_dev = float(np.max(np.abs(pairings - np.eye(len(steps)))))

    gram = dual_matrix @ source.matrix @ dual_matrix.T
    covariance_dev = float(np.max(np.abs(gram - np.diag(lambdas))))

    representers = dual_matrix @ source.matrix
    representer_dev = float(np.max(np.abs(representers - lambdas[:, None] * directions)))

    # R h*_n = h_n, so ||h_n||_gamma^2 = h*_n^T R h*_n
    h_norms = np.sqrt(np.array([cm_inner(source, h_star(step), h_star(step)) for step in steps]))
    h_norm_dev = float(np.max(np.abs(h_norms - 1.0)))

    passed = (
        pairing_dev <= pairing_tol
        and covariance_dev <= covariance_tol
        and representer_dev <= covariance_tol
        and h_norm_dev <= pairing_tol
    )
    if not passed:
        logger.warning(
            f"Biorthogonality deviations: pairing {pairing_dev:.3e}, covariance {covariance_dev:.3e}, "
            f"representer {representer_dev:.3e}, h-norm {h_norm_dev:.3e}"
        )
    return BiorthogonalityReport(
        n_steps=len(steps),
        max_pairing_deviation=pairing_dev,
        max_covariance_deviation=covariance_dev,
        max_representer_deviation=representer_dev,
        max_h_norm_deviation=h_norm_dev,
        pairing_tolerance=pairing_tol,
        covariance_tolerance=covariance_tol,
        passed=passed,
    )
