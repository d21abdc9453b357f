"""
Tests for the increment operators, Holder norms and the convolutional Young integral
"""
import os
import sys

import numpy as np
import pytest
from scipy import integrate

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.algebraic_increments import (
    Increment2, RegularizedNoise, convolution_integral, delta_1, delta_2, delta_hat_1, delta_hat_2, holder_norm,
    refinement_differences, truncation_tail_bound
)
from src.errors import ArgumentError, ConvergenceError
from src.fbm_gaussian import TimeGrid, TraceClassSpec, sample_qfbm
from src.semigroup_spectral import SpectralSemigroup


@pytest.fixture
def grid():
    return TimeGrid.uniform(0.5, 16)


def test_delta_of_constant_path_is_zero(grid):
    f = np.tile([1.0, -2.0, 3.0], (grid.points.size, 1))
    assert np.all(delta_1(f, grid).values == 0.0)


def test_delta_of_linear_path(grid):
    v = np.array([1.0, 2.0])
    f = grid.points[:, None] * v[None, :]
    g = delta_1(f, grid)
    for t in range(grid.points.size):
        for s in range(t + 1):
            np.testing.assert_allclose(g.at(t, s), (grid.points[t] - grid.points[s]) * v, atol=1e-15)
    assert np.all(g.at(2, 5) == 0.0)


def test_delta_delta_vanishes(grid):
    """Integer-valued paths make the telescoping identity exact in floating point"""
    f = np.random.default_rng(0).integers(-50, 50, size=(grid.points.size, 3)).astype(float)
    assert np.all(delta_2(delta_1(f, grid)) == 0.0)


def test_delta_hat_of_free_evolution_is_zero(grid):
    S = SpectralSemigroup.dirichlet_laplacian(4)
    v = np.array([1.0, -1.0, 0.5, 2.0])
    f = np.array([S.apply_s(t, v) for t in grid.points])
    assert np.max(np.abs(delta_hat_1(f, S, grid).values)) < 1e-15


def test_delta_hat_with_identity_semigroup(grid):
    S = SpectralSemigroup.identity(3)
    f = np.random.default_rng(1).standard_normal((grid.points.size, 3))
    np.testing.assert_array_equal(delta_hat_1(f, S, grid).values, delta_1(f, grid).values)


def test_delta_hat_squared_vanishes(grid):
    S = SpectralSemigroup.dirichlet_laplacian(4)
    f = np.random.default_rng(2).standard_normal((grid.points.size, 4))
    assert np.max(np.abs(delta_hat_2(delta_hat_1(f, S, grid), S))) < 1e-13


def test_holder_norm_examples(grid):
    v = np.array([3.0, 4.0])
    zero = Increment2(grid, np.zeros((grid.points.size, grid.points.size, 2)))
    assert holder_norm(zero, 0.5) == 0.0
    g = delta_1(grid.points[:, None] * v[None, :], grid)
    assert holder_norm(g, 1.0) == pytest.approx(5.0, rel=1e-12)
    assert holder_norm(-2.5 * g, 0.4) == pytest.approx(2.5 * holder_norm(g, 0.4), rel=1e-14)
    with pytest.raises(ArgumentError):
        holder_norm(g, -0.1)


def test_holder_norm_with_fractional_power(grid):
    S = SpectralSemigroup.dirichlet_laplacian(2)
    v = np.array([1.0, 0.0])
    g = delta_1(grid.points[:, None] * v[None, :], grid)
    assert holder_norm(g, 1.0, 1.0, S) == pytest.approx(np.pi ** 2, rel=1e-12)
    with pytest.raises(ArgumentError):
        holder_norm(g, 1.0, 0.5)


def test_chen_relation_on_noise_samples():
    grid = TimeGrid.uniform(0.5, 31)
    S = SpectralSemigroup.dirichlet_laplacian(4)
    spec = TraceClassSpec.power_law(3)
    for seed in range(10):
        noise = RegularizedNoise(S, sample_qfbm(spec, 0.75, grid, seed))
        assert noise.chen_residual() < 1e-12


def test_regularized_noise_diagonal():
    grid = TimeGrid.uniform(0.5, 8)
    S = SpectralSemigroup.dirichlet_laplacian(3)
    path = sample_qfbm(TraceClassSpec.power_law(2), 0.75, grid, 4)
    noise = RegularizedNoise(S, path)
    t = grid.points
    expected = path.spec.sqrt_weights[1] * (path.values[1, 6] - path.values[1, 2]) * S.factors(t[6] - t[2])
    np.testing.assert_allclose(noise.diagonal(1, 6, 2), expected)
    np.testing.assert_allclose(noise.increment(1).at(6, 2), expected)
    np.testing.assert_allclose(noise.apply(1, 6, 2, np.ones(3)), expected)
    with pytest.raises(ArgumentError):
        noise.diagonal(0, 2, 6)


class TestConvolutionIntegral:

    def test_zero_integrand(self, grid):
        S = SpectralSemigroup.dirichlet_laplacian(3)
        path = sample_qfbm(TraceClassSpec.power_law(2), 0.75, grid, 0)
        z = np.zeros((2, grid.points.size, 3))
        assert np.all(convolution_integral(S, z, path, 0.0, 0.5) == 0.0)

    def test_constant_integrand_identity_semigroup(self, grid):
        S = SpectralSemigroup.identity(2)
        spec = TraceClassSpec(np.array([0.25]))
        path = sample_qfbm(spec, 0.75, grid, 3)
        v = np.array([1.5, -0.5])
        z = np.broadcast_to(v, (1, grid.points.size, 2))
        s, t = grid.points[4], grid.points[12]
        expected = v * (path.values[0, 12] - path.values[0, 4]) * 0.5
        np.testing.assert_allclose(convolution_integral(S, z, path, s, t), expected, atol=1e-15)

    def test_linear_driver_closed_form(self):
        S = SpectralSemigroup.diagonal([1.0, 2.0, 3.0])
        v = np.array([1.0, -2.0, 0.5])
        s, t = 0.0, 0.5
        got = convolution_integral(S, lambda u: v[None, :], lambda u: np.array([u]), s, t, weights=[0.5])
        mu = S.eigenvalues
        expected = (1.0 - np.exp(-mu * (t - s))) / mu * v * 0.5
        np.testing.assert_allclose(got, expected, rtol=1e-8)

    def test_smooth_integrand_against_quadrature(self):
        S = SpectralSemigroup.diagonal([0.5, 1.0])
        v = np.array([1.0, 2.0])
        s, t = 0.1, 0.6
        got = convolution_integral(S, lambda u: (u * v)[None, :], lambda u: np.array([np.sin(u)]), s, t)
        expected = np.array([
            integrate.quad(lambda u: np.exp(-mu * (t - u)) * u * vn * np.cos(u), s, t, epsabs=1e-14)[0]
            for mu, vn in zip(S.eigenvalues, v)
        ])
        np.testing.assert_allclose(got, expected, rtol=1e-6)

    def test_additivity_on_grid(self, grid):
        S = SpectralSemigroup.dirichlet_laplacian(3)
        path = sample_qfbm(TraceClassSpec.power_law(2), 0.75, grid, 5)
        z = np.random.default_rng(6).standard_normal((2, grid.points.size, 3))
        s, u, t = grid.points[0], grid.points[6], grid.points[16]
        whole = convolution_integral(S, z, path, s, t)
        split = convolution_integral(S, z, path, u, t) + S.apply_s(t - u, convolution_integral(S, z, path, s, u))
        np.testing.assert_allclose(whole, split, atol=2e-9)

    def test_additivity_with_refinement(self):
        S = SpectralSemigroup.diagonal([1.0, 2.0])
        z = lambda u: np.array([[np.cos(u), u]])
        x = lambda u: np.array([u ** 2])
        s, u, t = 0.0, 0.25, 0.5
        whole = convolution_integral(S, z, x, s, t)
        split = convolution_integral(S, z, x, u, t) + S.apply_s(t - u, convolution_integral(S, z, x, s, u))
        assert np.linalg.norm(whole - split) < 2e-9

    def test_grid_tolerance_is_enforced(self, grid):
        S = SpectralSemigroup.dirichlet_laplacian(3)
        path = sample_qfbm(TraceClassSpec.power_law(2), 0.75, grid, 5)
        z = np.random.default_rng(6).standard_normal((2, grid.points.size, 3))
        plain = convolution_integral(S, z, path, 0.0, 0.5)
        np.testing.assert_array_equal(convolution_integral(S, z, path, 0.0, 0.5, tol=1e300), plain)
        with pytest.raises(ConvergenceError) as info:
            convolution_integral(S, z, path, 0.0, 0.5, tol=1e-300)
        gaps = refinement_differences(S, z, path, 0.0, 0.5)
        assert len(gaps) == 4
        assert info.value.last_levels == pytest.approx(tuple(gaps[-2:]))

    def test_grid_tolerance_met_by_exact_sums(self, grid):
        S = SpectralSemigroup.identity(2)
        path = sample_qfbm(TraceClassSpec(np.array([0.25])), 0.75, grid, 3)
        z = np.broadcast_to(np.array([1.5, -0.5]), (1, grid.points.size, 2))
        got = convolution_integral(S, z, path, 0.0, 0.5, tol=1e-12)
        np.testing.assert_allclose(got, np.array([1.5, -0.5]) * path.values[0, -1] * 0.5, atol=1e-15)

    def test_odd_cell_count_cannot_be_checked(self, grid):
        S = SpectralSemigroup.dirichlet_laplacian(3)
        path = sample_qfbm(TraceClassSpec.power_law(2), 0.75, grid, 0)
        z = np.ones((2, grid.points.size, 3))
        assert refinement_differences(S, z, path, grid.points[0], grid.points[3]).size == 0
        with pytest.raises(ConvergenceError):
            convolution_integral(S, z, path, grid.points[0], grid.points[3], tol=1.0)

    def test_refinement_differences_shrink(self):
        S = SpectralSemigroup.diagonal([0.5, 1.0])
        v = np.array([1.0, 2.0])
        gaps = refinement_differences(S, lambda u: (u * v)[None, :], lambda u: np.array([np.sin(u)]), 0.1, 0.6,
                                      depth=8)
        assert gaps.shape == (8,)
        assert np.all(np.diff(gaps) < 0)
        assert gaps[-1] < 1e-3 * gaps[0]

    def test_linear_in_integrand(self, grid):
        S = SpectralSemigroup.dirichlet_laplacian(3)
        path = sample_qfbm(TraceClassSpec.power_law(2), 0.75, grid, 7)
        rng = np.random.default_rng(8)
        z1, z2 = rng.standard_normal((2, 2, grid.points.size, 3))
        lhs = convolution_integral(S, 2.0 * z1 - z2, path, 0.0, 0.5)
        rhs = 2.0 * convolution_integral(S, z1, path, 0.0, 0.5) - convolution_integral(S, z2, path, 0.0, 0.5)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_rough_driver_does_not_converge(self):
        rng = np.random.default_rng(9)
        S = SpectralSemigroup.diagonal([1.0])
        with pytest.raises(ConvergenceError) as info:
            convolution_integral(S, lambda u: np.array([[1.0]]), lambda u: rng.standard_normal(1), 0.0, 1.0,
                                 max_depth=4)
        assert len(info.value.last_levels) == 2

    def test_bad_arguments(self, grid):
        S = SpectralSemigroup.dirichlet_laplacian(3)
        path = sample_qfbm(TraceClassSpec.power_law(2), 0.75, grid, 0)
        z = np.zeros((2, grid.points.size, 3))
        with pytest.raises(ArgumentError):
            convolution_integral(S, z, path, 0.5, 0.5)
        with pytest.raises(ArgumentError):
            convolution_integral(S, z[:, :, :2], path, 0.0, 0.5)
        with pytest.raises(ArgumentError):
            convolution_integral(S, z, path, 0.0, 0.5, germ="midpoint")


def test_truncation_tail_bound():
    spec = TraceClassSpec.power_law(8, 3.0)
    assert truncation_tail_bound(spec, 0.0) == 0.0
    assert truncation_tail_bound(spec, 2.0) == pytest.approx(2.0 * spec.sqrt_tail())
    assert truncation_tail_bound(spec, 1.0) < np.sum(np.arange(9, 10 ** 5, dtype=float) ** -1.5) + 1e-2


if __name__ == "__main__":
    pytest.main([__file__])
