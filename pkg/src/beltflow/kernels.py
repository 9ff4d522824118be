"""Gaussian smoothing kernel and the density-dependent velocity ingredients.

The congestion correction is built in three stages: the density is smoothed
with a truncated Gaussian stencil, the gradient of the smoothed field is taken
with central differences, and the normalized negative gradient (scaled by the
interaction strength and gated by a smooth activation switch) becomes the
dynamic velocity contribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import DensityField, GridSpec, CellMask

# Largest fraction of kernel mass that may fall outside the truncated stencil.
TAIL_MASS_LIMIT = 0.01


def eval_mollifier(x, sigma: float) -> float:
    """Gaussian bump (sigma / 2 pi) * exp(-sigma ||x||^2 / 2), maximal at the origin."""
    if sigma <= 0.0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    x0, x1 = float(x[0]), float(x[1])
    return sigma / (2.0 * math.pi) * math.exp(-0.5 * sigma * (x0 * x0 + x1 * x1))


def default_radius(sigma: float, dx: float) -> int:
    """Stencil radius in cells covering four standard deviations (1/sqrt(sigma))."""
    return max(1, math.ceil(4.0 / (math.sqrt(sigma) * dx) - 1e-12))


@dataclass(frozen=True)
class MollifierKernel:
    """Truncated, renormalized Gaussian stencil.

    The 2D stencil is the outer product of two 1D factors, which the
    convolution exploits; `stencil` is kept for inspection and tests.
    """

    sigma: float
    dx: float
    dy: float
    radius: int
    wx: np.ndarray       # (2R+1,) normalized 1D factor along x
    wy: np.ndarray       # (2R+1,) normalized 1D factor along y
    stencil: np.ndarray  # (2R+1, 2R+1) = outer(wx, wy)


def _axis_weights(sigma: float, step: float, radius: int) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1) * step
    g = np.exp(-0.5 * sigma * offsets * offsets)
    return g / g.sum()


def build_discrete_kernel(sigma: float, dx: float, dy: float, radius: int | None = None) -> MollifierKernel:
    """Sample the mollifier on cell offsets and renormalize to unit sum.

    Rejects radii whose truncated tail would drop more than TAIL_MASS_LIMIT of
    the kernel mass (tail beyond radius r carries exp(-sigma r^2 / 2)).
    """
    if sigma <= 0.0 or dx <= 0.0 or dy <= 0.0:
        raise ValidationError("sigma and cell sizes must be positive")
    if radius is None:
        radius = default_radius(sigma, min(dx, dy))
    if radius < 1:
        raise ValidationError(f"kernel radius must be at least 1 cell, got {radius}")
    r_phys = radius * min(dx, dy)
    tail = math.exp(-0.5 * sigma * r_phys * r_phys)
    if tail > TAIL_MASS_LIMIT:
        raise ValidationError(
            f"radius {radius} truncates {tail:.2%} of the kernel mass "
            f"(limit {TAIL_MASS_LIMIT:.0%}); enlarge the radius"
        )
    wx = _axis_weights(sigma, dx, radius)
    wy = _axis_weights(sigma, dy, radius)
    return MollifierKernel(sigma, dx, dy, radius, wx, wy, np.outer(wx, wy))


def _convolve_axis(a: np.ndarray, weights: np.ndarray, axis: int, pad: str = "zero") -> np.ndarray:
    """1D convolution with a symmetric weight vector and zero or edge padding.

    Offsets +k and -k are summed pairwise before accumulation so that flipping
    the input along `axis` flips the output exactly (summation order is
    invariant under the reflection).
    """
    radius = (len(weights) - 1) // 2
    n = a.shape[axis]
    pad_width = [(0, 0)] * a.ndim
    pad_width[axis] = (radius, radius)
    if pad == "zero":
        padded = np.pad(a, pad_width)
    else:
        padded = np.pad(a, pad_width, mode="edge")
    out = weights[radius] * a
    for k in range(1, radius + 1):
        lo = [slice(None)] * a.ndim
        hi = [slice(None)] * a.ndim
        lo[axis] = slice(radius - k, radius - k + n)
        hi[axis] = slice(radius + k, radius + k + n)
        out += weights[radius + k] * (padded[tuple(lo)] + padded[tuple(hi)])
    return out


def _smooth_array(a: np.ndarray, kernel: MollifierKernel) -> np.ndarray:
    return _convolve_axis(_convolve_axis(a, kernel.wx, 0), kernel.wy, 1)


def _solid_coverage(mask: CellMask, kernel: MollifierKernel) -> np.ndarray:
    """Fraction of each cell's stencil window that sees non-solid cells.

    Exactly 1.0 wherever the window holds no solid cell and stays inside the
    grid, so away from walls the normalized smoothing reduces to the plain
    convolution bit for bit. The exterior is classified by replicating the
    boundary cells: beyond skirt boards and the closed upstream edge it counts
    as wall (no data), beyond the open downstream edge as genuinely empty belt.
    """
    cache = getattr(mask, "_coverage_cache", None)
    if cache is None:
        cache = {}
        mask._coverage_cache = cache
    key = id(kernel)
    w = cache.get(key)
    if w is None:
        deficit = np.where(mask.solid, -1.0, 0.0)
        w = 1.0 + _convolve_axis(
            _convolve_axis(deficit, kernel.wx, 0, pad="edge"), kernel.wy, 1, pad="edge"
        )
        cache[key] = w
    return w


def smooth(rho: DensityField, kernel: MollifierKernel, mask: CellMask | None = None) -> DensityField:
    """Discrete convolution of the density with the kernel, zero-padded outside
    the grid.

    Without a mask this is the plain truncated-Gaussian convolution. With a
    mask, solid cells are treated as missing data (they contribute neither
    density nor weight): the window average is renormalized by the non-solid
    coverage. Walls therefore neither attract nor repel smoothed mass, while
    every window free of solid cells gives the identical plain result.
    """
    if mask is None:
        return DensityField(rho.grid, _smooth_array(rho.rho, kernel))
    a = np.where(mask.solid, 0.0, rho.rho)
    coverage = _solid_coverage(mask, kernel)
    s = _smooth_array(a, kernel)
    safe = coverage > 1e-12
    out = np.zeros_like(s)
    np.divide(s, coverage, out=out, where=safe)
    return DensityField(rho.grid, out)


def smoothed_gradient(
    rho: DensityField,
    kernel: MollifierKernel,
    grid: GridSpec | None = None,
    mask: CellMask | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the smoothed density: central differences inside, one-sided
    at the grid edges."""
    grid = grid if grid is not None else rho.grid
    s = smooth(rho, kernel, mask)
    gx, gy = np.gradient(s.rho, grid.dx, grid.dy)
    return gx, gy


def collision_operator(
    rho: DensityField,
    eps: float,
    kernel: MollifierKernel,
    grid: GridSpec | None = None,
    mask: CellMask | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Congestion-avoidance velocity: -eps * g / sqrt(1 + ||g||^2) with g the
    smoothed density gradient. Its magnitude is strictly below eps everywhere."""
    if eps < 0.0:
        raise ValidationError(f"interaction strength must be non-negative, got {eps}")
    grid = grid if grid is not None else rho.grid
    if eps == 0.0:
        z = np.zeros((grid.nx, grid.ny))
        return z, z.copy()
    gx, gy = smoothed_gradient(rho, kernel, grid, mask)
    scale = -eps / np.sqrt(1.0 + gx * gx + gy * gy)
    return scale * gx, scale * gy


@dataclass(frozen=True)
class HeavisideParams:
    """Smooth switch activating the congestion term near maximum density."""

    steepness: float        # larger values approximate a sharp step better
    threshold: float = 1.0  # normalized density at which the switch is half open

    def validate(self) -> None:
        if self.steepness <= 0.0:
            raise ValidationError(f"steepness must be positive, got {self.steepness}")


def _heaviside_array(rho: np.ndarray, params: HeavisideParams) -> np.ndarray:
    return np.arctan(params.steepness * (rho - params.threshold)) / math.pi + 0.5


def heaviside_activation(rho, params: HeavisideParams) -> np.ndarray:
    """arctan-based step approximation, strictly inside (0, 1) and exactly 1/2
    at the threshold; monotone increasing in the density."""
    params.validate()
    arr = rho.rho if isinstance(rho, DensityField) else np.asarray(rho, dtype=float)
    return _heaviside_array(arr, params)
