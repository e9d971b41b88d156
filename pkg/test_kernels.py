"""
Tests for kernels, grids, dual functionals and discretization
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError

from backend.errors import KernelConstructionError, KernelDomainError, NumericalInvariantError, SupportMismatchError
from backend.kernels.covariance_kernels import (
    DualFunctional,
    Grid,
    GridCovariance,
    GridSpec,
    KernelSpec,
    characteristic_functional,
    check_psd,
    discretize,
    eval_kernel,
)


def test_eval_kernel_brownian_motion():
    assert eval_kernel(KernelSpec.brownian_motion(), 0.3, 0.7) == pytest.approx(0.3)
    assert eval_kernel(KernelSpec.brownian_motion(), 1.0, 1.0) == 1.0


def test_eval_kernel_brownian_bridge():
    assert eval_kernel(KernelSpec.brownian_bridge(), 0.5, 0.5) == pytest.approx(0.25)
    assert eval_kernel(KernelSpec.brownian_bridge(), 1.0, 0.3) == pytest.approx(0.0)


def test_eval_kernel_user_matrix_uses_indices():
    spec = KernelSpec.user_matrix([[2.0, 0.5], [0.5, 1.0]])
    assert eval_kernel(spec, 0, 1) == 0.5
    with pytest.raises(KernelDomainError):
        eval_kernel(spec, 2, 0)


@pytest.mark.parametrize("s", [-0.1, 1.5, float("nan")])
def test_eval_kernel_rejects_out_of_domain(s):
    with pytest.raises(KernelDomainError):
        eval_kernel(KernelSpec.brownian_motion(), s, 0.5)


def test_dyadic_grid_points():
    grid = Grid.dyadic(3)
    assert grid.size == 9
    assert grid.points[4] == 0.5
    assert grid.index_of(0.375) == 3
    assert grid.contains_dyadic(2)
    assert not Grid.dyadic(1).contains_dyadic(2)


@pytest.mark.parametrize("points", [[], [0.2, 0.1], [0.0, 1.2], [0.5, 0.5]])
def test_grid_validation(points):
    with pytest.raises(KernelConstructionError):
        Grid(np.asarray(points, dtype=float))


def test_grid_spec_needs_exactly_one_source():
    with pytest.raises(ValidationError):
        GridSpec()
    with pytest.raises(ValidationError):
        GridSpec(points=[0.5], dyadic_level=2)
    assert GridSpec(dyadic_level=2).build().size == 5


def test_discretize_brownian_motion_is_min():
    cov = discretize(KernelSpec.brownian_motion(), Grid.dyadic(2))
    expected = np.minimum.outer(cov.grid.points, cov.grid.points)
    np.testing.assert_array_equal(cov.matrix, expected)
    assert cov.max_variance == 1.0


def test_discretize_bridge_vanishes_at_endpoints():
    cov = discretize(KernelSpec.brownian_bridge(), Grid.dyadic(3))
    assert cov.diagonal[0] == 0.0
    assert cov.diagonal[-1] == 0.0
    assert cov.max_variance == pytest.approx(0.25)


def test_user_matrix_symmetrized_within_tolerance():
    raw = np.array([[2.0, 1.0 + 1e-12], [1.0, 1.0]])
    cov = discretize(KernelSpec.user_matrix(raw))
    np.testing.assert_array_equal(cov.matrix, cov.matrix.T)
    assert cov.grid.size == 2


def test_user_matrix_rejections():
    with pytest.raises(KernelConstructionError):
        discretize(KernelSpec.user_matrix([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(KernelConstructionError):
        discretize(KernelSpec.user_matrix([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(KernelConstructionError):
        discretize(KernelSpec.user_matrix([[1.0, 0.0], [0.0, 1.0]]), Grid.dyadic(2))


def test_kernel_spec_validation():
    with pytest.raises(ValidationError):
        KernelSpec(kind="user_matrix")
    with pytest.raises(ValidationError):
        KernelSpec(kind="brownian_motion", matrix=[[1.0]])
    with pytest.raises(ValidationError):
        KernelSpec(kind="user_matrix", matrix=[[1.0, 0.0]])


def test_grid_covariance_requires_exact_symmetry():
    grid = Grid.uniform(2)
    with pytest.raises(KernelConstructionError):
        GridCovariance(np.array([[1.0, 0.1], [0.2, 1.0]]), grid)


def test_check_psd_raises_on_negative_eigenvalue():
    with pytest.raises(NumericalInvariantError):
        check_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert check_psd(np.eye(3)) == pytest.approx(1.0)


def test_dual_functional_algebra():
    f = DualFunctional.dirac(2).combine(DualFunctional.dirac(4), -0.5)
    x = np.arange(5, dtype=float)
    assert f.pair(x) == pytest.approx(2.0 - 2.0)
    assert f.norm == pytest.approx(1.5)
    np.testing.assert_array_equal(f.to_dense(5), [0, 0, 1, 0, -0.5])
    assert DualFunctional.from_dict(f.to_dict()) == f
    with pytest.raises(SupportMismatchError):
        f.pair(np.zeros(3))


def test_quadratic_form_uses_supports():
    cov = discretize(KernelSpec.brownian_motion(), Grid.dyadic(2))
    f = DualFunctional.dirac(2).combine(DualFunctional.dirac(4), -0.5)
    dense = f.to_dense(cov.size)
    assert cov.quadratic_form(f) == pytest.approx(dense @ cov.matrix @ dense)
    np.testing.assert_allclose(cov.apply(f), cov.matrix @ dense)


def test_characteristic_functional_of_pivot():
    cov = discretize(KernelSpec.brownian_motion(), Grid.dyadic(2))
    assert characteristic_functional(cov, DualFunctional.dirac(4)) == pytest.approx(math.exp(-0.5))
    assert characteristic_functional(cov, DualFunctional.zero()) == 1.0


@pytest.mark.parametrize("index", [float("nan"), float("inf"), 0.5])
def test_eval_kernel_user_matrix_rejects_non_index(index):
    spec = KernelSpec.user_matrix([[2.0, 0.5], [0.5, 1.0]])
    with pytest.raises(KernelDomainError):
        eval_kernel(spec, index, 0)


def test_discretize_brownian_motion_two_points():
    cov = discretize(KernelSpec.brownian_motion(), Grid(np.array([0.5, 1.0])))
    np.testing.assert_array_equal(cov.matrix, [[0.5, 0.5], [0.5, 1.0]])


@pytest.mark.parametrize("spec", [KernelSpec.brownian_motion(), KernelSpec.brownian_bridge()], ids=["bm", "bridge"])
def test_refining_grid_never_lowers_max_variance(rng, spec):
    for level in range(1, 6):
        coarse = discretize(spec, Grid.dyadic(level))
        fine = discretize(spec, Grid.dyadic(level + 1))
        assert fine.max_variance >= coarse.max_variance
    for _ in range(10):
        points = np.unique(rng.uniform(size=6))
        refined = np.unique(np.concatenate([points, rng.uniform(size=6)]))
        assert discretize(spec, Grid(refined)).max_variance >= discretize(spec, Grid(points)).max_variance


@pytest.mark.parametrize("spec", [KernelSpec.brownian_motion(), KernelSpec.brownian_bridge()], ids=["bm", "bridge"])
def test_analytic_kernels_psd_on_random_grids(rng, spec):
    for _ in range(20):
        points = np.unique(rng.uniform(size=int(rng.integers(2, 40))))
        cov = discretize(spec, Grid(points))
        min_eigenvalue = np.linalg.eigvalsh(cov.matrix).min()
        assert min_eigenvalue >= -1e-10 * cov.max_variance


def test_characteristic_functional_matches_dense_quadratic_form(rng, psd_factory):
    for _ in range(10):
        size = int(rng.integers(2, 15))
        cov = psd_factory(rng, size)
        weights = rng.standard_normal(size) * (rng.uniform(size=size) < 0.6)
        f = DualFunctional.from_dense(weights)
        expected = math.exp(-0.5 * weights @ cov.matrix @ weights)
        assert characteristic_functional(cov, f) == pytest.approx(expected, rel=1e-12)
        assert 0.0 < characteristic_functional(cov, f) <= 1.0
