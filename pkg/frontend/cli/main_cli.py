"""
Command-line front end for the greedy Karhunen-Loeve toolkit
"""
import argparse
import logging
import os
import sys
from dataclasses import asdict
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError

from backend.conditioning.conditional_measure import conditional_measure, decondition_mc, default_event_suite
from backend.decomposition.dual_basis import verify_biorthogonality
from backend.decomposition.greedy_decomposition import (
    Decomposition,
    decompose,
    rayleigh_bound_check,
    truncation_error,
)
from backend.errors import (
    AcceptanceCheckError,
    BanachKLError,
    ConfigurationError,
    DegeneratePivotError,
    NumericalInvariantError,
)
from backend.kernels.covariance_kernels import Grid, GridSpec, KernelKind, KernelSpec, discretize
from backend.oracles.wiener_oracle import compare_with_engine
from backend.sampling.kl_sampler import KL_STREAM, sample_paths, sample_summary, stream_generator
from backend.spectral.hilbert_compare import compare_decompositions, spectral_decompose
from backend.storage.artifact_store import (
    ArtifactStore,
    load_decomposition,
    load_grid_file,
    load_kernel_file,
    load_matrix_file,
)
from config import settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4

FIGURE1_STEPS = 8
FIGURE1_GRID_LEVEL = 4
PINNING_TOL = 1e-9


class RunConfig(BaseModel):
    """Validated configuration of one command"""
    command: str
    kernel: KernelSpec
    grid: Optional[GridSpec] = None
    max_steps: int = Field(default=settings.DEFAULT_MAX_STEPS, ge=0)
    lambda_tol: float = Field(default=settings.DEFAULT_LAMBDA_TOL, ge=0.0)
    seed: int = Field(default=settings.DEFAULT_SEED, ge=0)
    n_samples: int = Field(default=settings.DEFAULT_SAMPLES, ge=1)
    output_dir: str = settings.OUTPUT_DIRECTORY
    decomposition_path: Optional[str] = None
    n_terms: Optional[int] = Field(default=None, ge=0)
    values: List[float] = Field(default_factory=list)
    include_residual: bool = True
    inner: Literal["exact", "sampled"] = "exact"

    def build_grid(self) -> Optional[Grid]:
        return self.grid.build() if self.grid is not None else None

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        kernel = _resolve_kernel(args.kernel, args.matrix_file)
        grid = None
        if args.grid_file:
            loaded = load_grid_file(args.grid_file)
            if loaded.dyadic_level is not None:
                grid = GridSpec(dyadic_level=loaded.dyadic_level)
            else:
                grid = GridSpec(points=loaded.points.tolist())
        elif args.dyadic_level is not None or kernel.is_analytic:
            level = settings.DEFAULT_DYADIC_LEVEL if args.dyadic_level is None else args.dyadic_level
            grid = GridSpec(dyadic_level=level)
        options = {
            "command": args.command,
            "kernel": kernel,
            "grid": grid,
            "output_dir": args.out,
            "decomposition_path": args.decomposition,
            "n_terms": args.terms,
            "values": args.values or [],
            "include_residual": not args.no_residual,
            "inner": args.inner,
        }
        overrides = {"max_steps": args.steps, "lambda_tol": args.tol, "seed": args.seed, "n_samples": args.samples}
        for name, value in overrides.items():
            if value is not None:
                options[name] = value
        return cls(**options)


def _resolve_kernel(kernel: str, matrix_file: Optional[str]) -> KernelSpec:
    """A kernel kind name, a JSON kernel file, or --matrix-file for user matrices"""
    if matrix_file:
        return KernelSpec.user_matrix(load_matrix_file(matrix_file))
    if kernel in {kind.value for kind in KernelKind}:
        if kernel == KernelKind.USER_MATRIX.value:
            raise ConfigurationError("--kernel user_matrix needs --matrix-file")
        return KernelSpec(kind=KernelKind(kernel))
    if os.path.exists(kernel):
        return load_kernel_file(kernel)
    raise ConfigurationError(f"unknown kernel {kernel!r}: expected a kernel name or a JSON file")


def obtain_decomposition(config: RunConfig) -> Tuple[Decomposition, KernelSpec]:
    """Re-read --decomposition when given, otherwise decompose the configured kernel.

    The kernel returned is the one the decomposition was built from, which for a
    re-read artifact is the saved kernel, not the --kernel flag.
    """
    if config.decomposition_path:
        return load_decomposition(config.decomposition_path)
    source = discretize(config.kernel, config.build_grid())
    lambda_tol = config.lambda_tol * max(source.max_variance, 0.0)
    return decompose(source, max_steps=config.max_steps, lambda_tol=lambda_tol), config.kernel


def _print_table(title: str, frame: pd.DataFrame) -> None:
    print(f"\n{title}")
    print("-" * len(title))
    print(frame.to_string(index=False) if not frame.empty else "(empty)")


def lambda_table(decomposition: Decomposition) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "n": range(decomposition.rank),
            "lambda": decomposition.lambdas,
            "pivot_t": decomposition.pivot_times,
            "truncation_error": [truncation_error(decomposition, n) for n in range(decomposition.rank)],
        }
    )


def cmd_decompose(config: RunConfig) -> int:
    decomposition, kernel = obtain_decomposition(config)
    store = ArtifactStore(config.output_dir)
    store.save_decomposition(decomposition, kernel, include_residual=config.include_residual)
    _print_table(f"Greedy decomposition ({kernel.kind.value})", lambda_table(decomposition))
    print(f"{decomposition.rank} steps, termination: {decomposition.termination.value.replace('_', ' ')}")
    return EXIT_OK


def cmd_figure1(config: RunConfig) -> int:
    """Per-step CSVs of the first 8 components of a seeded Wiener path"""
    if config.kernel.kind is not KernelKind.BROWNIAN_MOTION:
        raise ConfigurationError("figure1 reproduces the Wiener measure; use --kernel brownian_motion")
    grid = config.build_grid()
    # the 8 steps consume the level-3 points, so the residual after them lives on level 4
    if grid is None or not grid.contains_dyadic(FIGURE1_GRID_LEVEL):
        raise ConfigurationError(f"figure1 needs a grid containing the dyadic points of level {FIGURE1_GRID_LEVEL}")
    decomposition = decompose(discretize(config.kernel, grid), max_steps=FIGURE1_STEPS)
    if decomposition.rank < FIGURE1_STEPS:
        raise NumericalInvariantError(f"expected {FIGURE1_STEPS} steps, engine produced {decomposition.rank}")

    xi = stream_generator(config.seed, KL_STREAM, 0).standard_normal(FIGURE1_STEPS)
    store = ArtifactStore(config.output_dir)
    partial_path = np.zeros(grid.size)
    for n, step in enumerate(decomposition.steps):
        component = np.sqrt(step.lam) * xi[n] * step.x
        partial_path = partial_path + component
        frame = pd.DataFrame(
            {
                "t": grid.points,
                "component": component,
                "residual_std": np.sqrt(np.clip(step.residual_variance, 0.0, None)),
                "partial_path": partial_path,
            }
        )
        store.save_table_csv(frame, f"figure1_step_{n}.csv")

    final_std = float(np.sqrt(max(decomposition.steps[-1].residual_max_entry, 0.0)))
    _print_table("Figure 1 steps", lambda_table(decomposition))
    print(f"max residual std after {FIGURE1_STEPS} steps: {final_std:.12f}")
    return EXIT_OK


def cmd_sample(config: RunConfig) -> int:
    decomposition, _ = obtain_decomposition(config)
    n_terms = decomposition.rank if config.n_terms is None else config.n_terms
    batch = sample_paths(decomposition, n_terms, config.n_samples, config.seed)
    store = ArtifactStore(config.output_dir)
    store.save_samples(batch, "samples.csv")
    summary = sample_summary(decomposition, batch)
    store.save_json(summary, "samples_summary.json")
    _print_table("Sample summary", pd.DataFrame([summary]))
    return EXIT_OK


def cmd_condition(config: RunConfig) -> int:
    decomposition, _ = obtain_decomposition(config)
    measure = conditional_measure(decomposition, config.values)
    paths = measure.sample(config.n_samples, config.seed)

    pinning_error = 0.0
    for k, value in measure.pinned:
        x_star = decomposition.steps[k].x_star
        evaluations = paths[:, x_star.support] @ x_star.weights
        pinning_error = max(pinning_error, float(np.max(np.abs(evaluations - value))))

    store = ArtifactStore(config.output_dir)
    frame = pd.DataFrame(paths, columns=[repr(float(t)) for t in decomposition.grid.points])
    store.save_table_csv(frame, "conditional_samples.csv")
    store.save_json(
        {
            "pinned": [{"step": k, "value": value} for k, value in measure.pinned],
            "pivot_t": [decomposition.steps[k].pivot_t for k, _ in measure.pinned],
            "mean": measure.mean.tolist(),
            "residual_variance": measure.covariance.diagonal.tolist(),
            "n_samples": config.n_samples,
            "seed": config.seed,
            "max_pinning_error": pinning_error,
        },
        "conditional_measure.json",
    )
    print(f"Conditioned on {len(measure.pinned)} values; max pinning error {pinning_error:.3e}")
    if pinning_error > PINNING_TOL:
        raise AcceptanceCheckError(f"conditional samples miss pinned values by {pinning_error:.3e}")
    return EXIT_OK


def cmd_decondition_check(config: RunConfig) -> int:
    decomposition, _ = obtain_decomposition(config)
    n_terms = min(4, decomposition.rank) if config.n_terms is None else config.n_terms
    reports = [
        decondition_mc(decomposition, n_terms - 1, event, config.n_samples, config.seed, inner=config.inner)
        for event in default_event_suite()
    ]
    frame = pd.DataFrame([asdict(report) for report in reports])
    store = ArtifactStore(config.output_dir)
    store.save_table_csv(frame, "decondition_check.csv")
    store.save_json({"reports": frame.to_dict(orient="records")}, "decondition_check.json")
    _print_table("Deconditioning suite", frame)
    failed = [report.event for report in reports if not report.passed]
    if failed:
        raise AcceptanceCheckError(f"estimators disagree beyond 3 sigma for: {', '.join(failed)}")
    return EXIT_OK


def cmd_compare(config: RunConfig) -> int:
    decomposition, _ = obtain_decomposition(config)
    spectral = spectral_decompose(decomposition.source)
    n_terms = decomposition.rank if config.n_terms is None else min(config.n_terms, decomposition.rank)
    report = compare_decompositions(decomposition, spectral, n_terms - 1)
    frame = report.to_frame()
    store = ArtifactStore(config.output_dir)
    store.save_table_csv(frame, "compare.csv")
    store.save_json(
        {
            "spectral_trace": report.spectral_trace,
            "weighted_diagonal_sum": report.weighted_diagonal_sum,
            "greedy_exceeds_trace_from": report.greedy_exceeds_trace_from,
            "diverging": report.diverging,
        },
        "compare_summary.json",
    )
    columns = ["n", "greedy_lambda", "spectral_lambda", "greedy_partial_sum", "spectral_partial_sum"]
    _print_table("Greedy vs spectral", frame[columns])
    print(
        f"spectral trace {report.spectral_trace:.6f}; "
        f"greedy partial sums exceed it from n={report.greedy_exceeds_trace_from}"
    )
    return EXIT_OK


def cmd_oracle_check(config: RunConfig) -> int:
    level = config.grid.dyadic_level if config.grid is not None and config.grid.dyadic_level is not None else None
    if level is None:
        raise ConfigurationError("oracle-check needs a dyadic grid (--level)")
    report = compare_with_engine(level, config.n_terms)
    store = ArtifactStore(config.output_dir)
    store.save_json(asdict(report), "oracle_check.json")
    summary = {key: value for key, value in asdict(report).items() if key not in ("lambdas", "pivots")}
    _print_table("Levy-Ciesielski oracle", pd.DataFrame([summary]))
    if not report.passed:
        raise AcceptanceCheckError(f"engine deviates from the Levy-Ciesielski oracle at level {level}")
    return EXIT_OK


def cmd_biorthogonality_check(config: RunConfig) -> int:
    decomposition, _ = obtain_decomposition(config)
    report = verify_biorthogonality(decomposition)
    rayleigh = [
        rayleigh_bound_check(decomposition, n, n_functionals=200, seed=config.seed)
        for n in range(decomposition.rank)
    ]
    store = ArtifactStore(config.output_dir)
    store.save_json(
        {"biorthogonality": asdict(report), "rayleigh": [asdict(check) for check in rayleigh]},
        "biorthogonality_check.json",
    )
    _print_table("Biorthogonality", pd.DataFrame([asdict(report)]))
    failed = [check.step for check in rayleigh if not check.passed]
    if not report.passed or failed:
        raise AcceptanceCheckError(f"dual basis check failed (Rayleigh failures at steps {failed})")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "decompose": cmd_decompose,
    "figure1": cmd_figure1,
    "sample": cmd_sample,
    "condition": cmd_condition,
    "decondition-check": cmd_decondition_check,
    "compare": cmd_compare,
    "oracle-check": cmd_oracle_check,
    "biorthogonality-check": cmd_biorthogonality_check,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--kernel", default=KernelKind.BROWNIAN_MOTION.value,
                        help="brownian_motion, brownian_bridge or a JSON kernel file")
    common.add_argument("--matrix-file", dest="matrix_file", help="user covariance matrix (JSON or CSV)")
    common.add_argument("--dyadic-level", "--level", dest="dyadic_level", type=int,
                        help=f"dyadic grid level (default {settings.DEFAULT_DYADIC_LEVEL})")
    common.add_argument("--grid-file", dest="grid_file", help="grid points (JSON or one-column CSV)")
    common.add_argument("--steps", type=int, help=f"maximum greedy steps (default {settings.DEFAULT_MAX_STEPS})")
    common.add_argument("--tol", type=float, help="lambda tolerance relative to lambda_0")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--samples", type=int, help="number of Monte-Carlo samples")
    common.add_argument("--out", default=settings.OUTPUT_DIRECTORY, help="output directory")
    common.add_argument("--decomposition", help="reuse a saved decomposition JSON")
    common.add_argument("--terms", type=int, help="number of expansion terms to use")
    common.add_argument("--values", type=float, nargs="+", help="pinned values t_0..t_n")
    common.add_argument("--no-residual", dest="no_residual", action="store_true",
                        help="omit the residual matrix from the decomposition JSON")
    common.add_argument("--inner", choices=["exact", "sampled"], default="exact",
                        help="conditional probability in decondition-check: normal CDF or one residual draw")

    parser = argparse.ArgumentParser(
        prog="banach-kl",
        description="Greedy Karhunen-Loeve decomposition of Gaussian measures in the sup norm",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        subparsers.add_parser(name, parents=[common], formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=settings.LOG_LEVEL)
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig.from_args(args)
        return COMMANDS[config.command](config)
    except (NumericalInvariantError, DegeneratePivotError) as e:
        logger.error(f"Numerical invariant violated: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AcceptanceCheckError as e:
        logger.error(f"Acceptance check failed: {e}")
        print(f"check failed: {e}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except (BanachKLError, ValidationError) as e:
        logger.error(f"Invalid configuration: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
