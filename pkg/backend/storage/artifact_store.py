"""
JSON and CSV persistence for decompositions, reports and plot-ready tables
"""
import json
import logging
import os
from datetime import datetime
from typing import Any, Dict, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from backend.decomposition.greedy_decomposition import Decomposition, DecompositionStep, TerminationReason
from backend.errors import ConfigurationError
from backend.kernels.covariance_kernels import (
    DualFunctional,
    Grid,
    GridCovariance,
    GridSpec,
    KernelSpec,
    discretize,
)
from backend.sampling.kl_sampler import SampleBatch
from config import settings

logger = logging.getLogger(__name__)


def _read_json(path: str) -> Any:
    try:
        with open(path, 'r') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e}") from e


def load_kernel_file(path: str) -> KernelSpec:
    """Kernel spec from a JSON file such as {"kind": "user_matrix", "matrix": [[...]]}"""
    try:
        return KernelSpec.model_validate(_read_json(path))
    except ValidationError as e:
        raise ConfigurationError(f"{path}: invalid kernel spec: {e}") from e


def load_matrix_file(path: str) -> np.ndarray:
    """Square matrix from JSON (list of rows) or headerless CSV"""
    if path.endswith(".json"):
        data = _read_json(path)
        if isinstance(data, dict):
            data = data.get("matrix")
        try:
            return np.asarray(data, dtype=float)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"{path}: matrix entries must be numbers") from e
    try:
        return pd.read_csv(path, header=None, comment="#").to_numpy(dtype=float)
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise ConfigurationError(f"cannot read matrix from {path}: {e}") from e


def load_grid_file(path: str) -> Grid:
    """Grid from JSON ({"points": [...]}, {"dyadic_level": J} or a bare list) or a one-column CSV"""
    if path.endswith(".json"):
        data = _read_json(path)
        if isinstance(data, list):
            data = {"points": data}
        try:
            return GridSpec.model_validate(data).build()
        except ValidationError as e:
            raise ConfigurationError(f"{path}: invalid grid: {e}") from e
    try:
        points = pd.read_csv(path, header=None, comment="#").to_numpy(dtype=float).reshape(-1)
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise ConfigurationError(f"cannot read grid from {path}: {e}") from e
    return Grid(points)


def decomposition_to_dict(decomposition: Decomposition, kernel: KernelSpec, include_residual: bool = True) -> Dict[str, Any]:
    steps = [
        {
            "lambda": step.lam,
            "pivot_index": step.pivot_index,
            "pivot_t": step.pivot_t,
            "pivot_sign": step.pivot_sign,
            "x": step.x.tolist(),
            "x_star": step.x_star.to_dict() if step.x_star is not None else None,
            "residual_variance": step.residual_variance.tolist(),
            "residual_max_entry": step.residual_max_entry,
        }
        for step in decomposition.steps
    ]
    return {
        "format_version": settings.FORMAT_VERSION,
        "kernel": kernel.model_dump(mode="json", exclude_none=True),
        "grid": decomposition.grid.to_dict(),
        "termination": decomposition.termination.value,
        "lambda_tol": decomposition.lambda_tol,
        "steps": steps,
        "residual": decomposition.residual.matrix.tolist() if include_residual else None,
    }


def decomposition_from_dict(data: Dict[str, Any]) -> Tuple[Decomposition, KernelSpec]:
    """Rebuild a decomposition; the source covariance is re-discretized from the kernel spec"""
    version = str(data.get("format_version", ""))
    if version.split(".")[0] != settings.FORMAT_VERSION.split(".")[0]:
        raise ConfigurationError(f"unsupported decomposition format_version {version!r}")
    try:
        kernel = KernelSpec.model_validate(data["kernel"])
        grid_data = data["grid"]
        grid = Grid(np.asarray(grid_data["points"], dtype=float), dyadic_level=grid_data.get("dyadic_level"))
        source = discretize(kernel, grid)
        steps = tuple(
            DecompositionStep(
                lam=float(step["lambda"]),
                pivot_index=int(step["pivot_index"]),
                pivot_t=float(step["pivot_t"]),
                pivot_sign=int(step.get("pivot_sign", 1)),
                f=DualFunctional.dirac(int(step["pivot_index"])),
                x=np.asarray(step["x"], dtype=float),
                x_star=DualFunctional.from_dict(step["x_star"]) if step.get("x_star") is not None else None,
                residual_variance=np.asarray(step["residual_variance"], dtype=float),
                residual_max_entry=float(step["residual_max_entry"]),
            )
            for step in data["steps"]
        )
        termination = TerminationReason(data["termination"])
        lambda_tol = float(data.get("lambda_tol", 0.0))
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigurationError(f"malformed decomposition artifact: {e}") from e

    if data.get("residual") is not None:
        residual = GridCovariance(np.asarray(data["residual"], dtype=float), grid)
    else:
        residual = _rebuild_residual(source, steps)
    decomposition = Decomposition(
        source=source, steps=steps, residual=residual, termination=termination, lambda_tol=lambda_tol
    )
    lam0 = steps[0].lam if steps else source.max_variance
    error = decomposition.reconstruction_error()
    if error > settings.RECONSTRUCTION_TOL * max(lam0, np.finfo(float).tiny):
        raise ConfigurationError(
            f"decomposition artifact does not match its {kernel.kind.value} kernel "
            f"(reconstruction error {error:.3e})"
        )
    return decomposition, kernel


def _rebuild_residual(source: GridCovariance, steps: Tuple[DecompositionStep, ...]) -> GridCovariance:
    """Terminal residual as the source minus the recorded rank-one terms, pivots zeroed"""
    logger.warning("Decomposition artifact has no residual; rebuilding it from the recorded steps")
    matrix = source.matrix.copy()
    for step in steps:
        matrix -= step.lam * np.outer(step.x, step.x)
    matrix = 0.5 * (matrix + matrix.T)
    pivots = [step.pivot_index for step in steps]
    matrix[pivots, :] = 0.0
    matrix[:, pivots] = 0.0
    return GridCovariance(matrix, source.grid)


class ArtifactStore:
    """Writes run artifacts under one output directory"""

    def __init__(self, output_dir: Optional[str] = None):
        self.output_dir = output_dir or settings.OUTPUT_DIRECTORY
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def save_json(self, payload: Dict[str, Any], name: str) -> str:
        """Write a JSON artifact stamped with format_version and creation time"""
        target = self.path(name)
        document = {"format_version": settings.FORMAT_VERSION, "created_at": datetime.now().isoformat()}
        document.update(payload)
        try:
            with open(target, 'w') as f:
                json.dump(document, f, indent=2)
        except (OSError, TypeError) as e:
            logger.error(f"Error saving {target}: {e}")
            raise
        logger.info(f"Wrote {target}")
        return target

    def save_table_csv(self, frame: pd.DataFrame, name: str) -> str:
        """Write a CSV table preceded by a '# format_version' comment line"""
        target = self.path(name)
        try:
            with open(target, 'w', newline='') as f:
                f.write(f"# format_version: {settings.FORMAT_VERSION}\n")
                frame.to_csv(f, index=False)
        except OSError as e:
            logger.error(f"Error saving {target}: {e}")
            raise
        logger.info(f"Wrote {target} ({len(frame)} rows)")
        return target

    def save_decomposition(
        self,
        decomposition: Decomposition,
        kernel: KernelSpec,
        name: str = "decomposition.json",
        include_residual: bool = True,
    ) -> str:
        payload = decomposition_to_dict(decomposition, kernel, include_residual)
        payload.pop("format_version")
        return self.save_json(payload, name)

    def save_samples(self, batch: SampleBatch, name: str = "samples.csv") -> str:
        """One row per path, one column per grid point (headed by t)"""
        frame = pd.DataFrame(batch.paths, columns=[repr(float(t)) for t in batch.grid.points])
        return self.save_table_csv(frame, name)


def load_decomposition(path: str) -> Tuple[Decomposition, KernelSpec]:
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a JSON object")
    decomposition, kernel = decomposition_from_dict(data)
    logger.info(f"Loaded decomposition with {decomposition.rank} steps from {path}")
    return decomposition, kernel


def read_table_csv(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")
