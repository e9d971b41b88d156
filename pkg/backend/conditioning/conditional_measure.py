"""
Conditional measures given pinned dual coordinates and the deconditioning check
"""
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field
from scipy.stats import norm

from backend.errors import ConditioningError
from backend.kernels.covariance_kernels import GridCovariance
from backend.sampling.kl_sampler import (
    DIRECT_STREAM,
    RESIDUAL_STREAM,
    covariance_factor,
    gaussian_draws,
    sample_paths,
)

if TYPE_CHECKING:
    from backend.decomposition.greedy_decomposition import Decomposition

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConditionalMeasure:
    """Gaussian measure sum_k t_k x_k + gamma_{n+1}"""
    mean: np.ndarray
    covariance: GridCovariance
    pinned: List[Tuple[int, float]] = field(default_factory=list)
    scale: float = 1.0

    def sample(self, n_samples: int, seed: int) -> np.ndarray:
        factor = covariance_factor(self.covariance, self.scale)
        return self.mean + gaussian_draws(factor, n_samples, seed, RESIDUAL_STREAM)

    def marginal(self, index: int) -> Tuple[float, float]:
        """Mean and standard deviation of the path value at a grid index"""
        variance = max(float(self.covariance.matrix[index, index]), 0.0)
        return float(self.mean[index]), float(np.sqrt(variance))


def conditional_measure(decomposition: "Decomposition", values: Sequence[float]) -> ConditionalMeasure:
    """Distribution of the path given x*_k(path) = values[k] for k < len(values)"""
    values = [float(v) for v in values]
    if len(values) > decomposition.rank:
        raise ConditioningError(
            f"{len(values)} pinned values but only {decomposition.rank} recorded steps"
        )
    source = decomposition.source
    scale = max(source.max_variance, 0.0) or 1.0
    if not values:
        return ConditionalMeasure(mean=np.zeros(source.size), covariance=source, scale=scale)

    n = len(values) - 1
    mean = np.asarray(values) @ decomposition.directions[: n + 1]
    pinned = list(enumerate(values))
    logger.debug(f"Conditioned on {len(values)} dual coordinates")
    return ConditionalMeasure(mean=mean, covariance=decomposition.residual_after(n), pinned=pinned, scale=scale)


class ThresholdEvent(BaseModel):
    """{path(t) <= level} or {path(t) > level} at a grid point t"""
    t: float = Field(ge=0.0, le=1.0)
    level: float
    direction: Literal["le", "gt"] = "le"

    def indicator(self, values: np.ndarray) -> np.ndarray:
        return values <= self.level if self.direction == "le" else values > self.level

    def probability(self, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
        """P(event) for N(mean, std^2) values; degenerate where std = 0"""
        mean = np.asarray(mean, dtype=float)
        std = np.asarray(std, dtype=float)
        positive = std > 0.0
        below = np.where(positive, norm.cdf((self.level - mean) / np.where(positive, std, 1.0)), mean <= self.level)
        return below if self.direction == "le" else 1.0 - below

    def label(self) -> str:
        symbol = "<=" if self.direction == "le" else ">"
        return f"path({self.t:g}) {symbol} {self.level:g}"


@dataclass
class DeconditioningReport:
    """Two estimates of gamma(B) and whether they agree within 3 combined standard errors"""
    event: str
    n: int
    n_samples: int
    direct_estimate: float
    direct_std_error: float
    conditional_estimate: float
    conditional_std_error: float
    exact: Optional[float]
    passed: bool
    inner: str = "exact"


def default_event_suite() -> List[ThresholdEvent]:
    return [
        ThresholdEvent(t=1.0, level=0.0),
        ThresholdEvent(t=1.0, level=1.0),
        ThresholdEvent(t=0.5, level=0.3),
        ThresholdEvent(t=0.25, level=0.5, direction="gt"),
        ThresholdEvent(t=0.75, level=-0.2),
    ]


def decondition_mc(
    decomposition: "Decomposition",
    n: int,
    event: ThresholdEvent,
    n_samples: int,
    seed: int,
    inner: Literal["exact", "sampled"] = "exact",
) -> DeconditioningReport:
    """Estimate gamma(B) directly and through the integral of gamma^t(B) over t_k ~ N(0, lambda_k).

    With inner="exact" the conditional probability gamma^t(B) of a threshold event is a
    normal CDF in the conditional mean, so the outer integral is the only Monte-Carlo part.
    With inner="sampled" each outer draw is paired with one residual path from
    gamma_{n+1} and the event indicator is averaged instead.
    """
    if inner not in ("exact", "sampled"):
        raise ConditioningError(f"inner must be 'exact' or 'sampled', got {inner!r}")
    decomposition.check_step(n)
    source = decomposition.source
    index = source.grid.index_of(event.t)
    scale = max(source.max_variance, 0.0) or 1.0

    direct_paths = gaussian_draws(covariance_factor(source, scale), n_samples, seed, DIRECT_STREAM)
    hits = event.indicator(direct_paths[:, index]).astype(float)
    direct = float(hits.mean())
    direct_se = float(np.sqrt(direct * (1.0 - direct) / n_samples))

    # partial KL sums at the event point are the conditional means sum_k t_k x_k(t)
    conditional_means = sample_paths(decomposition, n + 1, n_samples, seed).paths[:, index]
    residual = decomposition.residual_after(n)
    if inner == "exact":
        residual_std = np.sqrt(max(float(residual.matrix[index, index]), 0.0))
        conditional = event.probability(conditional_means, residual_std)
    else:
        residual_values = gaussian_draws(covariance_factor(residual, scale), n_samples, seed, RESIDUAL_STREAM)[:, index]
        conditional = event.indicator(conditional_means + residual_values).astype(float)
    estimate = float(conditional.mean())
    conditional_se = float(conditional.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0

    exact = float(event.probability(0.0, np.sqrt(max(float(source.matrix[index, index]), 0.0))))
    bound = 3.0 * np.hypot(direct_se, conditional_se)
    passed = abs(direct - estimate) <= bound + 1e-12
    logger.info(
        f"Deconditioning {event.label()} ({inner} inner): direct {direct:.4f} +/- {direct_se:.4f}, "
        f"conditional {estimate:.4f} +/- {conditional_se:.4f}, exact {exact:.4f}"
    )
    return DeconditioningReport(
        event=event.label(),
        n=n,
        n_samples=n_samples,
        direct_estimate=direct,
        direct_std_error=direct_se,
        conditional_estimate=estimate,
        conditional_std_error=conditional_se,
        exact=exact,
        passed=bool(passed),
        inner=inner,
    )


def kriging_variance(decomposition: "Decomposition", n: int) -> np.ndarray:
    """Posterior variance of the path given its values at the first n + 1 pivots.

    Its maximum is lambda_{n+1}, the smallest worst-case variance any greedy design reaches.
    """
    return decomposition.residual_after(n).diagonal.copy()


def design_points(decomposition: "Decomposition", n: int) -> List[float]:
    """Grid times of the first n + 1 pivots"""
    decomposition.check_step(n)
    return decomposition.pivot_times[: n + 1]
