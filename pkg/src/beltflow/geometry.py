"""Belt geometry, computational grid, cell classification, static transport field.

World coordinates: the belt transports in +x, the reference line for mass-flow
measurements is x = 0 (the downstream tip of the diverter sits on it), and the
skirt boards are the lateral walls y = 0 and y = belt_width.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import MaskError, ValidationError

# Cell classes.
FLUID = 0
SOLID = 1
OUTFLOW = 2

# Relative slack on geometric comparisons: keeps knife-edge cells (centers that
# sit exactly on the rasterization threshold) from flipping under the slightly
# different floating-point paths taken by mirrored scenes.
_GEOM_EPS = 1e-9


@dataclass(frozen=True)
class DiverterSpec:
    """Straight plate redirecting the flow; its downstream tip lies on x = 0."""

    angle_deg: float        # angle between the plate and the transport direction
    anchor_y: float         # lateral position of the downstream tip [m]
    length: float           # plate length [m]
    attach: str = "top"     # wall the upstream end runs toward: "top" or "bottom"

    def validate(self) -> None:
        # 90 deg is a degenerate perpendicular wall, useful in tests.
        if not 0.0 < self.angle_deg <= 90.0:
            raise ValidationError(
                f"diverter angle must be in (0, 90] degrees, got {self.angle_deg}"
            )
        if self.length <= 0.0:
            raise ValidationError(f"diverter length must be positive, got {self.length}")
        if self.attach not in ("top", "bottom"):
            raise ValidationError(
                f"diverter attach must be 'top' or 'bottom', got {self.attach!r}"
            )

    def endpoints(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """((tip on x = 0), (upstream end)) in world coordinates."""
        a = math.radians(self.angle_deg)
        side = 1.0 if self.attach == "top" else -1.0
        tip = (0.0, self.anchor_y)
        tail = (-self.length * math.cos(a), self.anchor_y + side * self.length * math.sin(a))
        return tip, tail


@dataclass(frozen=True)
class SceneGeometry:
    """Belt rectangle with optional diverter; transport direction is fixed +x."""

    belt_length: float      # [m]
    belt_width: float       # [m]
    upstream_length: float  # distance from the upstream belt edge to x = 0 [m]
    diverter: DiverterSpec | None = None

    @property
    def x_min(self) -> float:
        return -self.upstream_length

    @property
    def x_max(self) -> float:
        return self.belt_length - self.upstream_length

    def validate(self) -> None:
        if self.belt_length <= 0.0 or self.belt_width <= 0.0:
            raise ValidationError("belt dimensions must be positive")
        if not 0.0 < self.upstream_length < self.belt_length:
            raise ValidationError(
                "upstream_length must lie strictly between 0 and belt_length"
            )
        if self.diverter is not None:
            self.diverter.validate()
            tol = _GEOM_EPS * max(self.belt_length, self.belt_width)
            for px, py in self.diverter.endpoints():
                inside = (
                    self.x_min - tol <= px <= self.x_max + tol
                    and -tol <= py <= self.belt_width + tol
                )
                if not inside:
                    raise MaskError(
                        f"diverter endpoint ({px:.4f}, {py:.4f}) lies outside the belt"
                    )


def mirror_scene(scene: SceneGeometry) -> SceneGeometry:
    """Reflect the scene across the belt centerline y = belt_width / 2."""
    div = scene.diverter
    if div is not None:
        div = DiverterSpec(
            angle_deg=div.angle_deg,
            anchor_y=scene.belt_width - div.anchor_y,
            length=div.length,
            attach="bottom" if div.attach == "top" else "top",
        )
    return SceneGeometry(scene.belt_length, scene.belt_width, scene.upstream_length, div)


@dataclass(frozen=True)
class GridSpec:
    """Regular cell-centered grid; cell (i, j) spans [x_i, x_i + dx] x [y_j, y_j + dy]."""

    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float]  # world coordinates of the lower-left corner of cell (0, 0)

    def __post_init__(self):
        if self.dx <= 0.0 or self.dy <= 0.0:
            raise ValidationError("cell sizes must be positive")
        if self.nx < 3 or self.ny < 3:
            raise ValidationError("grid needs at least 3 cells per direction")
        ox = self.origin[0]
        if abs(ox / self.dx - round(ox / self.dx)) > _GEOM_EPS:
            raise ValidationError(
                "grid origin must place the reference line x = 0 on a cell face"
            )
        if not 1 <= self.ref_cell <= self.nx - 1:
            raise ValidationError("reference line x = 0 must lie inside the grid")

    @property
    def ref_cell(self) -> int:
        """Index of the first cell column downstream of the x = 0 face."""
        return int(round(-self.origin[0] / self.dx))

    @property
    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def y_centers(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.dy

    def center_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x_centers, self.y_centers, indexing="ij")

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy


def build_grid(scene: SceneGeometry, dx: float, dy: float, item_side: float | None = None) -> GridSpec:
    """Cover the belt rectangle with cells so that x = 0 falls on a cell face.

    `item_side` is the footprint edge of the transported items; cells coarser
    than one item cannot resolve the initial density and are rejected.
    """
    scene.validate()
    if dx <= 0.0 or dy <= 0.0:
        raise ValidationError("cell sizes must be positive")
    if item_side is not None and (dx > item_side * (1.0 + _GEOM_EPS) or dy > item_side * (1.0 + _GEOM_EPS)):
        raise ValidationError(
            f"cell size ({dx} x {dy}) exceeds the item side {item_side}; "
            "the grid cannot resolve a single item"
        )
    # ceil with slack so exact divisions do not gain a spurious extra cell
    k_up = math.ceil(scene.upstream_length / dx - _GEOM_EPS)
    k_down = math.ceil((scene.belt_length - scene.upstream_length) / dx - _GEOM_EPS)
    ny = math.ceil(scene.belt_width / dy - _GEOM_EPS)
    return GridSpec(nx=k_up + k_down, ny=ny, dx=dx, dy=dy, origin=(-k_up * dx, 0.0))


@dataclass
class CellMask:
    """Per-cell classification of the grid into FLUID / SOLID / OUTFLOW."""

    grid: GridSpec
    classes: np.ndarray  # int8, shape (nx, ny)

    @property
    def fluid(self) -> np.ndarray:
        return self.classes == FLUID

    @property
    def solid(self) -> np.ndarray:
        return self.classes == SOLID

    @property
    def outflow(self) -> np.ndarray:
        return self.classes == OUTFLOW

    def flipped(self) -> "CellMask":
        """Mask of the scene reflected across the centerline (row order reversed)."""
        return CellMask(self.grid, np.ascontiguousarray(self.classes[:, ::-1]))

    def validate(self) -> None:
        cls = self.classes
        if cls.shape != (self.grid.nx, self.grid.ny):
            raise MaskError("mask shape does not match the grid")
        if not (np.all(cls[:, 0] == SOLID) and np.all(cls[:, -1] == SOLID)):
            raise MaskError("skirt-board rows must be solid")
        if not np.all(cls[0, :] == SOLID):
            raise MaskError("upstream edge column must be solid (closed belt end)")
        last = cls[-1, :]
        if not np.all((last == SOLID) | (last == OUTFLOW)):
            raise MaskError("downstream edge column must be outflow (or wall corner)")
        if not np.any(last == OUTFLOW):
            raise MaskError("downstream edge has no outflow cells; the belt is sealed")
        fluid = self.fluid
        open_ = fluid | self.outflow
        has_open_neighbor = np.zeros_like(fluid)
        has_open_neighbor[1:, :] |= open_[:-1, :]
        has_open_neighbor[:-1, :] |= open_[1:, :]
        has_open_neighbor[:, 1:] |= open_[:, :-1]
        has_open_neighbor[:, :-1] |= open_[:, 1:]
        sealed = fluid & ~has_open_neighbor
        if sealed.any():
            i, j = np.argwhere(sealed)[0]
            raise MaskError(f"fluid cell ({i}, {j}) is sealed off by solid cells")


def _segment_cells(grid: GridSpec, p: tuple[float, float], q: tuple[float, float]) -> np.ndarray:
    """Cells whose center lies within the conservative sealing radius of p-q.

    The radius is half the cell box projected onto the segment normal: for a
    45-degree plate on square cells that is half the cell diagonal (both
    face-diagonal neighbors of each staircase step fill in, so a 4-connected
    path can never cross), while an axis-aligned plate keeps a one-cell chain.
    A plate collinear with a cell face is nudged upstream so it occupies the
    upstream column rather than both.
    """
    ex, ey = q[0] - p[0], q[1] - p[1]
    seg2 = ex * ex + ey * ey
    if seg2 <= 0.0:
        raise ValidationError("degenerate zero-length segment")
    seg_len = math.sqrt(seg2)
    nx_hat, ny_hat = -ey / seg_len, ex / seg_len
    radius = 0.5 * (grid.dx * abs(nx_hat) + grid.dy * abs(ny_hat))
    r2 = radius * radius * (1.0 + _GEOM_EPS)
    px, qx = p[0], q[0]
    if abs(ex) < 1e-12 * seg_len:
        px -= 1e-6 * grid.dx
        qx -= 1e-6 * grid.dx
    cx, cy = grid.center_mesh()
    t = np.clip(((cx - px) * ex + (cy - p[1]) * ey) / seg2, 0.0, 1.0)
    ddx = cx - (px + t * ex)
    ddy = cy - (p[1] + t * ey)
    return ddx * ddx + ddy * ddy <= r2


def _check_diverter_chain(grid: GridSpec, div_cells: np.ndarray, p, q) -> None:
    # Every row whose center the segment's y-range covers must hold at least
    # one plate cell, otherwise straight-through x-flux can slip past the plate.
    y_lo, y_hi = min(p[1], q[1]), max(p[1], q[1])
    yc = grid.y_centers
    rows = np.nonzero((yc >= y_lo) & (yc <= y_hi))[0]
    for j in rows:
        if 0 < j < grid.ny - 1 and not div_cells[:, j].any():
            raise MaskError(f"diverter rasterization leaves a through-flow gap at row {j}")
    # The plate cells must form one 8-connected chain.
    todo = np.argwhere(div_cells)
    if todo.size == 0:
        return
    seen = np.zeros_like(div_cells)
    stack = deque([tuple(todo[0])])
    seen[tuple(todo[0])] = True
    while stack:
        i, j = stack.pop()
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                ii, jj = i + di, j + dj
                if 0 <= ii < grid.nx and 0 <= jj < grid.ny:
                    if div_cells[ii, jj] and not seen[ii, jj]:
                        seen[ii, jj] = True
                        stack.append((ii, jj))
    if seen.sum() != div_cells.sum():
        raise MaskError("diverter rasterization broke into disconnected pieces")


def rasterize_mask(scene: SceneGeometry, grid: GridSpec) -> CellMask:
    """Classify every cell: walls and diverter are SOLID, the downstream edge
    column is OUTFLOW, the upstream edge is SOLID (all mass is placed initially,
    nothing enters later), everything else is FLUID."""
    scene.validate()
    cls = np.full((grid.nx, grid.ny), FLUID, dtype=np.int8)
    if scene.diverter is not None:
        p, q = scene.diverter.endpoints()
        div_cells = _segment_cells(grid, p, q)
        _check_diverter_chain(grid, div_cells, p, q)
        cls[div_cells] = SOLID
    cls[:, 0] = SOLID
    cls[:, -1] = SOLID
    cls[0, :] = SOLID
    last = cls[-1, :]
    last[last == FLUID] = OUTFLOW
    mask = CellMask(grid, cls)
    mask.validate()
    return mask


@dataclass
class StaticVelocityField:
    """Belt-induced transport velocity per cell."""

    ux: np.ndarray
    uy: np.ndarray


def build_static_field(mask: CellMask, belt_speed: float) -> StaticVelocityField:
    """(belt_speed, 0) wherever material can sit or leave, (0, 0) on solid cells.

    belt_speed = 0 yields the all-zero field of a static scene.
    """
    if belt_speed < 0.0:
        raise ValidationError(f"belt speed must be non-negative, got {belt_speed}")
    moving = (mask.classes != SOLID).astype(float)
    return StaticVelocityField(ux=belt_speed * moving, uy=np.zeros_like(moving))


@dataclass
class DensityField:
    """Cell-averaged normalized density (1.0 = maximum packing) on a grid."""

    grid: GridSpec
    rho: np.ndarray

    @classmethod
    def zeros(cls, grid: GridSpec) -> "DensityField":
        return cls(grid, np.zeros((grid.nx, grid.ny)))

    def copy(self) -> "DensityField":
        return DensityField(self.grid, self.rho.copy())

    def integral(self) -> float:
        """Total density integral in m^2 (normalized units x cell area)."""
        return float(self.rho.sum()) * self.grid.cell_area
