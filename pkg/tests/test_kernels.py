"""Smoothing kernel, gradient, collision term, and activation switch tests."""

import math

import numpy as np
import pytest

from beltflow.errors import ValidationError
from beltflow.geometry import DensityField, GridSpec, SceneGeometry, build_grid, rasterize_mask
from beltflow.kernels import (
    HeavisideParams,
    build_discrete_kernel,
    collision_operator,
    default_radius,
    eval_mollifier,
    heaviside_activation,
    smooth,
    smoothed_gradient,
)


def open_grid(n=50, d=0.01):
    return GridSpec(nx=n, ny=n, dx=d, dy=d, origin=(-d * (n // 2), 0.0))


class TestEvalMollifier:
    def test_value_at_origin(self):
        assert eval_mollifier((0.0, 0.0), 10000.0) == pytest.approx(10000.0 / (2 * math.pi))
        assert eval_mollifier((0.0, 0.0), 10000.0) == pytest.approx(1591.549, abs=5e-4)

    def test_one_standard_deviation(self):
        sigma = 10000.0
        r = 1.0 / math.sqrt(sigma)
        assert eval_mollifier((r, 0.0), sigma) == pytest.approx(
            sigma / (2 * math.pi) * math.exp(-0.5)
        )

    def test_radial_symmetry(self):
        v = eval_mollifier((0.003, 0.004), 5000.0)
        assert eval_mollifier((-0.003, 0.004), 5000.0) == v
        assert eval_mollifier((0.004, 0.003), 5000.0) == v

    def test_positive_off_center(self):
        assert eval_mollifier((1.0, 1.0), 100.0) > 0.0

    def test_rejects_bad_sigma(self):
        with pytest.raises(ValidationError):
            eval_mollifier((0.0, 0.0), 0.0)


def gaussian_tail_beyond(sigma, r):
    """Mass of the normalized 2D Gaussian outside radius r, by radial quadrature."""
    s = np.linspace(r, r + 20.0 / math.sqrt(sigma), 200001)
    integrand = sigma * np.exp(-0.5 * sigma * s * s) * s
    return float(np.trapezoid(integrand, s))


class TestBuildDiscreteKernel:
    def test_default_radius_and_shape(self):
        k = build_discrete_kernel(10000.0, 0.01, 0.01)
        assert k.radius == 4
        assert k.stencil.shape == (9, 9)
        assert np.argmax(k.stencil) == (k.stencil.size - 1) // 2  # center weight largest
        assert abs(k.stencil.sum() - 1.0) < 1e-14

    def test_tail_mass_of_default_radius(self):
        # quadrature oracle agrees with the closed form exp(-sigma r^2 / 2)
        tail = gaussian_tail_beyond(10000.0, 0.04)
        assert tail == pytest.approx(math.exp(-8.0), rel=1e-6)
        assert tail < 0.01

    def test_rejects_degenerate_radius(self):
        with pytest.raises(ValidationError):
            build_discrete_kernel(10000.0, 0.01, 0.01, radius=0)

    def test_rejects_heavy_truncation(self):
        # radius 3 leaves exp(-4.5) ~ 1.1% outside, just over the limit
        assert gaussian_tail_beyond(10000.0, 0.03) > 0.01
        with pytest.raises(ValidationError):
            build_discrete_kernel(10000.0, 0.01, 0.01, radius=3)

    def test_doubling_cell_size_halves_radius(self):
        assert default_radius(10000.0, 0.01) == 4
        assert default_radius(10000.0, 0.02) == 2

    def test_symmetries(self):
        k = build_discrete_kernel(10000.0, 0.01, 0.01)
        w = k.stencil
        assert np.array_equal(w, w[::-1, :])
        assert np.array_equal(w, w[:, ::-1])
        assert np.array_equal(w, w.T)
        assert np.all(w >= 0.0)


class TestSmooth:
    def test_impulse_reproduces_stencil(self):
        grid = open_grid(30)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        rho = DensityField.zeros(grid)
        rho.rho[15, 15] = 1.0
        out = smooth(rho, k).rho
        r = k.radius
        window = out[15 - r:15 + r + 1, 15 - r:15 + r + 1]
        assert np.array_equal(window, k.stencil)
        outside = out.copy()
        outside[15 - r:15 + r + 1, 15 - r:15 + r + 1] = 0.0
        assert not outside.any()

    def test_constant_preserved_in_interior(self):
        grid = open_grid(30)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        rho = DensityField(grid, np.full((30, 30), 0.7))
        out = smooth(rho, k).rho
        r = k.radius
        assert np.allclose(out[r:-r, r:-r], 0.7, rtol=1e-13)

    def test_zero_field(self):
        grid = open_grid(20)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        assert not smooth(DensityField.zeros(grid), k).rho.any()

    def test_linearity(self):
        grid = open_grid(24)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        rng = np.random.default_rng(3)
        a = DensityField(grid, rng.uniform(0, 1, (24, 24)))
        b = DensityField(grid, rng.uniform(0, 1, (24, 24)))
        lhs = smooth(DensityField(grid, 2.0 * a.rho + 3.0 * b.rho), k).rho
        rhs = 2.0 * smooth(a, k).rho + 3.0 * smooth(b, k).rho
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_integral_preserved_for_interior_support(self):
        grid = open_grid(40)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        rho = DensityField.zeros(grid)
        rng = np.random.default_rng(7)
        rho.rho[10:30, 10:30] = rng.uniform(0, 1, (20, 20))  # support >= R from edges
        out = smooth(rho, k)
        assert abs(out.integral() - rho.integral()) < 1e-12 * max(1.0, rho.integral())

    def test_solid_cells_contribute_nothing(self):
        scene = SceneGeometry(0.5, 0.3, 0.4)
        grid = build_grid(scene, 0.01, 0.01)
        mask = rasterize_mask(scene, grid)
        rho = DensityField.zeros(grid)
        rho.rho[mask.solid] = 5.0  # junk on walls must not leak into the result
        out = smooth(rho, mask=mask, kernel=build_discrete_kernel(10000.0, 0.01, 0.01))
        assert not out.rho.any()

    def test_masked_smoothing_matches_plain_away_from_walls(self):
        scene = SceneGeometry(0.5, 0.3, 0.4)
        grid = build_grid(scene, 0.01, 0.01)
        mask = rasterize_mask(scene, grid)
        k = build_discrete_kernel(10000.0, 0.01, 0.01)
        rng = np.random.default_rng(11)
        rho = DensityField(grid, rng.uniform(0, 1, (grid.nx, grid.ny)))
        rho.rho[~mask.fluid] = 0.0
        plain = smooth(rho, k).rho
        masked = smooth(rho, k, mask).rho
        r = k.radius
        interior = slice(1 + r, -1 - r)
        assert np.array_equal(plain[interior, interior], masked[interior, interior])

    def test_masked_smoothing_is_neutral_at_walls(self):
        # constant density against a wall stays constant: walls neither attract
        # nor repel smoothed mass (x range keeps clear of the open downstream
        # edge, where the genuinely empty outflow cells do pull the average down)
        scene = SceneGeometry(0.5, 0.3, 0.4)
        grid = build_grid(scene, 0.01, 0.01)
        mask = rasterize_mask(scene, grid)
        k = build_discrete_kernel(10000.0, 0.01, 0.01)
        rho = DensityField(grid, np.where(mask.fluid, 0.8, 0.0))
        out = smooth(rho, k, mask).rho
        r = k.radius
        inner = out[1 + r:-1 - r, 1:-1]
        assert np.allclose(inner, 0.8, rtol=1e-12)


class TestSmoothedGradient:
    def test_constant_field_has_zero_gradient(self):
        grid = open_grid(20)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        gx, gy = smoothed_gradient(DensityField(grid, np.full((20, 20), 0.4)), k)
        r = k.radius + 1  # differences only touch padding-free smoothed cells
        assert np.allclose(gx[r:-r, r:-r], 0.0, atol=1e-12)
        assert np.allclose(gy[r:-r, r:-r], 0.0, atol=1e-12)

    def test_linear_field_gradient_is_exact(self):
        grid = open_grid(50)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        x, _ = grid.center_mesh()
        slope = 2.0
        gx, gy = smoothed_gradient(DensityField(grid, slope * x), k)
        r = k.radius + 1
        assert np.allclose(gx[r:-r, r:-r], slope, atol=1e-12 * slope)
        assert np.allclose(gy[r:-r, r:-r], 0.0, atol=1e-12 * slope)

    def test_mirrored_field_negates_x_component(self):
        grid = open_grid(30)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        rng = np.random.default_rng(5)
        rho = rng.uniform(0, 1, (30, 30))
        gx, gy = smoothed_gradient(DensityField(grid, rho), k)
        gx_m, gy_m = smoothed_gradient(DensityField(grid, rho[::-1, :].copy()), k)
        assert np.allclose(gx_m, -gx[::-1, :], atol=1e-13)
        assert np.allclose(gy_m, gy[::-1, :], atol=1e-13)


class TestCollisionOperator:
    def test_zero_strength(self):
        grid = open_grid(20)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        rng = np.random.default_rng(2)
        ix, iy = collision_operator(DensityField(grid, rng.uniform(0, 1, (20, 20))), 0.0, k)
        assert not ix.any() and not iy.any()

    def test_constant_density(self):
        grid = open_grid(20)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        ix, iy = collision_operator(DensityField(grid, np.full((20, 20), 1.0)), 0.5, k)
        r = k.radius + 1
        assert np.allclose(ix[r:-r, r:-r], 0.0, atol=1e-12)
        assert np.allclose(iy[r:-r, r:-r], 0.0, atol=1e-12)

    def test_magnitude_strictly_below_eps(self):
        grid = open_grid(16)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        rng = np.random.default_rng(0)
        eps = 0.715
        worst = 0.0
        for _ in range(1000):
            rho = DensityField(grid, rng.uniform(0, 2.5, (16, 16)))
            ix, iy = collision_operator(rho, eps, k)
            worst = max(worst, float(np.sqrt(ix * ix + iy * iy).max()))
        assert worst < eps

    def test_direction_opposes_gradient(self):
        grid = open_grid(24)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        rng = np.random.default_rng(9)
        rho = DensityField(grid, rng.uniform(0, 1, (24, 24)))
        gx, gy = smoothed_gradient(rho, k)
        ix, iy = collision_operator(rho, 0.3, k)
        assert np.all(ix * gx + iy * gy <= 0.0)

    def test_rejects_negative_eps(self):
        grid = open_grid(10)
        k = build_discrete_kernel(10000.0, grid.dx, grid.dy)
        with pytest.raises(ValidationError):
            collision_operator(DensityField.zeros(grid), -0.1, k)


class TestHeaviside:
    def test_half_at_threshold(self):
        h = heaviside_activation(np.array([1.0]), HeavisideParams(50.0))
        assert h[0] == 0.5

    def test_empty_cell_value(self):
        h = heaviside_activation(np.array([0.0]), HeavisideParams(50.0))
        expected = 0.5 - math.atan(50.0) / math.pi
        assert h[0] == pytest.approx(expected, rel=1e-14)
        assert h[0] == pytest.approx(0.00637, abs=1e-5)

    def test_sharp_limit(self):
        h = heaviside_activation(np.array([2.0]), HeavisideParams(1e9))
        assert h[0] > 1.0 - 1e-8

    def test_strictly_monotone_and_bounded(self):
        rho = np.linspace(-1.0, 4.0, 2001)
        h = heaviside_activation(rho, HeavisideParams(50.0))
        assert np.all(np.diff(h) > 0.0)
        assert np.all((h > 0.0) & (h < 1.0))

    def test_rejects_bad_steepness(self):
        with pytest.raises(ValidationError):
            heaviside_activation(np.array([1.0]), HeavisideParams(0.0))
