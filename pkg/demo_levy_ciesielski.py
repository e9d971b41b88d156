#!/usr/bin/env python3
"""
Walkthrough: greedy decomposition of the Wiener measure and its Levy-Ciesielski reading
"""
import sys

import numpy as np
import pandas as pd

sys.path.append('.')

from backend.conditioning.conditional_measure import conditional_measure, design_points, kriging_variance  # noqa: E402
from backend.decomposition.dual_basis import verify_biorthogonality  # noqa: E402
from backend.decomposition.greedy_decomposition import decompose, truncation_error  # noqa: E402
from backend.kernels.covariance_kernels import Grid, KernelSpec, discretize  # noqa: E402
from backend.oracles.wiener_oracle import compare_with_engine, levy_lambda, levy_level_partial_sum  # noqa: E402
from backend.spectral.hilbert_compare import compare_decompositions, spectral_decompose  # noqa: E402

LEVEL = 5


def print_header(title):
    """Print a formatted header"""
    print("\n" + "=" * 80)
    print(f"🚀 {title}")
    print("=" * 80)


def print_section(title):
    """Print a formatted section"""
    print(f"\n🔹 {title}")
    print("-" * 60)


def demo_greedy_steps(decomposition):
    print_header("GREEDY STEPS ON THE WIENER MEASURE")
    rows = [
        {
            "n": n,
            "lambda": step.lam,
            "levy_lambda": levy_lambda(n),
            "pivot_t": step.pivot_t,
            "truncation_error": truncation_error(decomposition, n),
        }
        for n, step in enumerate(decomposition.steps[:8])
    ]
    print(pd.DataFrame(rows).to_string(index=False))

    print_section("Dual functionals")
    for n, step in enumerate(decomposition.steps[:3]):
        terms = ", ".join(
            f"{weight:+.3f} delta_{decomposition.grid.points[index]:g}"
            for index, weight in step.x_star.coefficients.items()
        )
        print(f"x*_{n} = {terms}")


def demo_checks(decomposition):
    print_header("CONSISTENCY CHECKS")
    oracle = compare_with_engine(LEVEL)
    print(f"🧪 Oracle: lambda error {oracle.max_lambda_error:.2e}, x error {oracle.max_x_error:.2e}, "
          f"passed={oracle.passed}")
    report = verify_biorthogonality(decomposition)
    print(f"🧪 Biorthogonality: pairing {report.max_pairing_deviation:.2e}, "
          f"covariance {report.max_covariance_deviation:.2e}, passed={report.passed}")


def demo_conditioning(decomposition):
    print_header("CONDITIONING ON PIVOT VALUES")
    bridge = conditional_measure(decomposition, [0.0])
    print(f"Given W_1 = 0: max variance {bridge.covariance.max_variance:.4f} (Brownian bridge peak 0.25)")
    print(f"Design after 4 steps: {design_points(decomposition, 3)}")
    print(f"Worst posterior variance after 4 steps: {np.max(kriging_variance(decomposition, 3)):.4f}")


def demo_trace_contrast(decomposition):
    print_header("SUP-NORM VS L2 GEOMETRY")
    spectral = spectral_decompose(decomposition.source)
    report = compare_decompositions(decomposition, spectral, decomposition.rank - 1)
    print(f"Spectral trace: {report.spectral_trace:.4f}")
    for p in range(4):
        greedy_sum = report.rows[2 ** (p + 1) - 1].greedy_partial_sum
        print(f"Levels 0..{p}: greedy sum {greedy_sum:.4f} (expected {levy_level_partial_sum(p):.4f})")


def main():
    print("🌊 Greedy Karhunen-Loeve decomposition of the Wiener measure")
    decomposition = decompose(discretize(KernelSpec.brownian_motion(), Grid.dyadic(LEVEL)), max_steps=2 ** LEVEL)
    demo_greedy_steps(decomposition)
    demo_checks(decomposition)
    demo_conditioning(decomposition)
    demo_trace_contrast(decomposition)
    print("\n✅ Demo complete")


if __name__ == "__main__":
    main()
