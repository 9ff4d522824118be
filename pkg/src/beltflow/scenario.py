"""Scenario definition: item spec, parameter file parsing, initial density.

Scenario files are plain text with [scene], [items], [model], [solver] and
[placements] sections. The first four hold `key = value` lines; [placements]
holds one `x y angle_deg` row per item. Unknown keys are rejected rather than
silently ignored, and every field has a documented default so a minimal file
can be very short (see the scenarios/ directory of the repository).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .geometry import (
    CellMask,
    DensityField,
    DiverterSpec,
    GridSpec,
    SceneGeometry,
    StaticVelocityField,
    build_grid,
    build_static_field,
    rasterize_mask,
)
from .kernels import HeavisideParams, MollifierKernel, build_discrete_kernel
from .solver import SolverConfig


@dataclass(frozen=True)
class ItemSpec:
    """Footprint and mass of one transported item."""

    length: float = 0.07   # [m], along the transport direction
    width: float = 0.07    # [m]
    height: float = 0.02   # [m], informational only (the model is 2D)
    mass: float = 0.0491   # [kg]

    def validate(self) -> None:
        if min(self.length, self.width, self.height, self.mass) <= 0.0:
            raise ValidationError("item dimensions and mass must all be positive")


@dataclass(frozen=True)
class ModelParams:
    """Continuum-model parameters; densities are normalized so that the maximum
    admissible density is 1."""

    belt_speed: float = 0.13    # [m/s]
    eps_factor: float = 5.5     # interaction strength as a multiple of the belt speed
    sigma: float = 10000.0      # Gaussian smoothing scale (std dev 1/sqrt(sigma) meters)
    steepness: float = 50.0     # sharpness of the activation switch
    item_count: int = 100
    rho_max_physical: float = float("nan")  # width / length^2, reported, not used by the solver
    mass_scale: float = float("nan")        # kg per unit of integrated normalized density

    @property
    def eps(self) -> float:
        return self.eps_factor * self.belt_speed

    @property
    def heaviside(self) -> HeavisideParams:
        return HeavisideParams(steepness=self.steepness)

    def validate(self) -> None:
        if self.belt_speed < 0.0:
            raise ValidationError(f"v_belt must be non-negative, got {self.belt_speed}")
        if self.eps_factor < 0.0:
            raise ValidationError(f"eps_factor must be non-negative, got {self.eps_factor}")
        if self.sigma <= 0.0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if self.steepness <= 0.0:
            raise ValidationError(f"heaviside_h must be positive, got {self.steepness}")
        if self.item_count < 0:
            raise ValidationError(f"item count must be non-negative, got {self.item_count}")


@dataclass(frozen=True)
class Placement:
    """Item center; the recorded angle is accepted but items rasterize axis-aligned."""

    x: float
    y: float
    angle_deg: float = 0.0


@dataclass(frozen=True)
class ScenarioSpec:
    """Parsed scenario file, before any grid-dependent construction."""

    scene: SceneGeometry
    items: ItemSpec
    model: ModelParams
    solver: SolverConfig
    placements: tuple[Placement, ...] = ()
    dx: float = 0.01  # cell size [m]
    dy: float = 0.01


@dataclass
class Scenario:
    """Fully built runtime bundle the solver integrates."""

    scene: SceneGeometry
    items: ItemSpec
    params: ModelParams
    config: SolverConfig
    grid: GridSpec
    mask: CellMask
    static: StaticVelocityField
    kernel: MollifierKernel
    rho0: DensityField
    placements: tuple[Placement, ...]

    @property
    def total_mass_kg(self) -> float:
        return self.params.item_count * self.items.mass


def compute_rho_max(items: ItemSpec) -> float:
    """Physical maximum density width / length^2; the solver works with the
    normalized value 1, this one is reported for transparency."""
    items.validate()
    return items.width / (items.length * items.length)


def rasterize_initial_density(placements, items: ItemSpec, grid: GridSpec, mask: CellMask) -> DensityField:
    """Stamp each item's axis-aligned square onto the grid.

    Fully covered cells get density 1, edge cells the exact covered-area
    fraction, so the integral equals count * length * width. Items overlapping
    each other, a solid cell, or the grid boundary are rejected.
    """
    items.validate()
    ply = list(placements)
    if any(abs(p.angle_deg) > 1e-12 for p in ply):
        warnings.warn(
            "placement angles are ignored: items rasterize axis-aligned",
            stacklevel=2,
        )
    # touching edges are fine; the tolerance keeps exact tilings from tripping
    lim_x = items.length * (1.0 - 1e-9)
    lim_y = items.width * (1.0 - 1e-9)
    for a in range(len(ply)):
        for b in range(a + 1, len(ply)):
            if abs(ply[a].x - ply[b].x) < lim_x and abs(ply[a].y - ply[b].y) < lim_y:
                raise ValidationError(f"items {a} and {b} overlap")

    ox, oy = grid.origin
    x_hi_grid = ox + grid.nx * grid.dx
    y_hi_grid = oy + grid.ny * grid.dy
    rho = np.zeros((grid.nx, grid.ny))
    solid = mask.solid
    tol = 1e-9 * max(grid.dx, grid.dy)
    for idx, p in enumerate(ply):
        x1, x2 = p.x - 0.5 * items.length, p.x + 0.5 * items.length
        y1, y2 = p.y - 0.5 * items.width, p.y + 0.5 * items.width
        if x1 < ox - tol or x2 > x_hi_grid + tol or y1 < oy - tol or y2 > y_hi_grid + tol:
            raise ValidationError(f"item {idx} extends outside the grid")
        i0 = max(0, int(np.floor((x1 - ox) / grid.dx)))
        i1 = min(grid.nx, int(np.ceil((x2 - ox) / grid.dx)))
        j0 = max(0, int(np.floor((y1 - oy) / grid.dy)))
        j1 = min(grid.ny, int(np.ceil((y2 - oy) / grid.dy)))
        faces_x = ox + np.arange(i0, i1 + 1) * grid.dx
        faces_y = oy + np.arange(j0, j1 + 1) * grid.dy
        frac_x = np.clip(np.minimum(x2, faces_x[1:]) - np.maximum(x1, faces_x[:-1]), 0.0, None) / grid.dx
        frac_y = np.clip(np.minimum(y2, faces_y[1:]) - np.maximum(y1, faces_y[:-1]), 0.0, None) / grid.dy
        block = np.outer(frac_x, frac_y)
        if ((block > 1e-12) & solid[i0:i1, j0:j1]).any():
            raise ValidationError(f"item {idx} overlaps a wall or the diverter")
        rho[i0:i1, j0:j1] += block
    return DensityField(grid, rho)


def compute_mass_scale(rho0: DensityField, count: int, items: ItemSpec, grid: GridSpec | None = None) -> float:
    """kg per unit of integrated normalized density, fixing the initial domain
    mass to exactly count * item mass."""
    if count == 0:
        return 0.0
    integral = rho0.integral()
    if integral <= 0.0:
        raise ValidationError(f"initial density is empty but the item count is {count}")
    return count * items.mass / integral


def default_placement_region(scene: SceneGeometry, items: ItemSpec, dx: float, dy: float):
    """Center bounds for synthetic placements: upstream of the diverter (or of
    x = 0 without one), clear of the walls by one cell plus a small pad."""
    if scene.diverter is not None:
        p, q = scene.diverter.endpoints()
        x_stop = min(p[0], q[0])
    else:
        x_stop = 0.0
    x_lo = scene.x_min + 2.0 * dx + 0.5 * items.length
    x_hi = x_stop - 2.0 * dx - 0.5 * items.length
    y_lo = 2.0 * dy + 0.5 * items.width
    y_hi = scene.belt_width - 2.0 * dy - 0.5 * items.width
    if x_hi <= x_lo or y_hi <= y_lo:
        raise ValidationError("belt leaves no room for synthetic placements")
    return (x_lo, x_hi), (y_lo, y_hi)


def scatter_placements(items: ItemSpec, count: int, x_range, y_range, seed: int = 0, gap: float = 0.004):
    """Seeded jittered-lattice scatter of `count` non-overlapping items with
    centers inside the given ranges, packed toward the downstream end."""
    if count == 0:
        return ()
    x_lo, x_hi = x_range
    y_lo, y_hi = y_range
    for g in (gap, 0.5 * gap):
        pitch_x = items.length + g
        pitch_y = items.width + g
        cols = int(np.floor((x_hi - x_lo) / pitch_x)) + 1
        rows = int(np.floor((y_hi - y_lo) / pitch_y)) + 1
        if cols >= 1 and rows >= 1 and cols * rows >= count:
            break
    else:
        raise ValidationError(
            f"placement region cannot hold {count} items of "
            f"{items.length} x {items.width} m"
        )
    y_start = y_lo + 0.5 * ((y_hi - y_lo) - (rows - 1) * pitch_y)
    jitter = max(0.0, 0.5 * g - 5e-4)
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-jitter, jitter, size=(count, 2)) if jitter > 0 else np.zeros((count, 2))
    placements = []
    n = 0
    for col in range(cols):          # downstream columns first
        cx = x_hi - col * pitch_x
        for row in range(rows):
            if n == count:
                break
            cy = y_start + row * pitch_y
            placements.append(Placement(cx + offsets[n, 0], cy + offsets[n, 1], 0.0))
            n += 1
    return tuple(placements)


def resolve_placements(spec: ScenarioSpec, seed: int = 0) -> tuple[Placement, ...]:
    """Placements from the file when given, otherwise a seeded synthetic scatter."""
    if spec.placements:
        if len(spec.placements) != spec.model.item_count:
            raise ValidationError(
                f"scenario lists {len(spec.placements)} placements "
                f"but the item count is {spec.model.item_count}"
            )
        return spec.placements
    region_x, region_y = default_placement_region(spec.scene, spec.items, spec.dx, spec.dy)
    return scatter_placements(spec.items, spec.model.item_count, region_x, region_y, seed)


def prepare_scenario(spec: ScenarioSpec, seed: int = 0) -> Scenario:
    """Build every grid-dependent piece of the scenario: grid, cell mask,
    static field, smoothing kernel, initial density and the mass scale."""
    spec.scene.validate()
    spec.items.validate()
    spec.model.validate()
    spec.solver.validate()
    grid = build_grid(spec.scene, spec.dx, spec.dy, item_side=min(spec.items.length, spec.items.width))
    mask = rasterize_mask(spec.scene, grid)
    placements = resolve_placements(spec, seed)
    rho0 = rasterize_initial_density(placements, spec.items, grid, mask)
    params = replace(
        spec.model,
        rho_max_physical=compute_rho_max(spec.items),
        mass_scale=compute_mass_scale(rho0, spec.model.item_count, spec.items, grid),
    )
    return Scenario(
        scene=spec.scene,
        items=spec.items,
        params=params,
        config=spec.solver,
        grid=grid,
        mask=mask,
        static=build_static_field(mask, params.belt_speed),
        kernel=build_discrete_kernel(params.sigma, grid.dx, grid.dy),
        rho0=rho0,
        placements=placements,
    )


# ---------------------------------------------------------------------------
# scenario file parsing

_SCENE_KEYS = {
    "belt_length", "belt_width", "upstream_length",
    "diverter_angle_deg", "diverter_anchor_y", "diverter_length", "diverter_attach",
}
_ITEM_KEYS = {"length", "width", "height", "mass", "count"}
_MODEL_KEYS = {"v_belt", "eps_factor", "sigma", "heaviside_h"}
_SOLVER_KEYS = {"dx", "dy", "dt", "t_end", "cfl_max", "probe_interval"}
_SECTIONS = {
    "scene": _SCENE_KEYS,
    "items": _ITEM_KEYS,
    "model": _MODEL_KEYS,
    "solver": _SOLVER_KEYS,
    "placements": None,
}


def _parse_sections(text: str, label: str):
    sections: dict[str, dict] = {}
    placements: list[Placement] = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise ValidationError(f"{label}:{lineno}: unknown section [{name}]")
            if name in sections:
                raise ValidationError(f"{label}:{lineno}: duplicate section [{name}]")
            sections[name] = {}
            current = name
            continue
        if current is None:
            raise ValidationError(f"{label}:{lineno}: content before any [section] header")
        if current == "placements":
            parts = line.replace(",", " ").split()
            if len(parts) not in (2, 3):
                raise ValidationError(
                    f"{label}:{lineno}: placement rows need 'x y' or 'x y angle_deg'"
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise ValidationError(f"{label}:{lineno}: placement values must be numbers") from None
            placements.append(Placement(vals[0], vals[1], vals[2] if len(vals) == 3 else 0.0))
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{label}:{lineno}: expected 'key = value'")
        key = key.strip().lower()
        allowed = _SECTIONS[current]
        if key not in allowed:
            raise ValidationError(f"{label}:{lineno}: unknown key '{key}' in [{current}]")
        if key in sections[current]:
            raise ValidationError(f"{label}:{lineno}: duplicate key '{key}'")
        sections[current][key] = (value.strip(), lineno)
    return sections, placements


def _take(section: dict, key: str, default, conv, label: str):
    if key not in section:
        return default
    value, lineno = section[key]
    try:
        return conv(value)
    except ValueError:
        raise ValidationError(f"{label}:{lineno}: cannot parse '{key} = {value}'") from None


def loads_scenario(text: str, label: str = "<string>") -> ScenarioSpec:
    """Parse scenario text; see load_scenario for the file-based variant."""
    sections, placements = _parse_sections(text, label)
    scene_s = sections.get("scene", {})
    items_s = sections.get("items", {})
    model_s = sections.get("model", {})
    solver_s = sections.get("solver", {})

    diverter = None
    div_keys = [k for k in scene_s if k.startswith("diverter_")]
    if div_keys:
        missing = {"diverter_angle_deg", "diverter_anchor_y", "diverter_length"} - set(div_keys)
        if missing:
            raise ValidationError(f"{label}: diverter needs keys {sorted(missing)} as well")
        diverter = DiverterSpec(
            angle_deg=_take(scene_s, "diverter_angle_deg", None, float, label),
            anchor_y=_take(scene_s, "diverter_anchor_y", None, float, label),
            length=_take(scene_s, "diverter_length", None, float, label),
            attach=_take(scene_s, "diverter_attach", "top", str, label),
        )
    scene = SceneGeometry(
        belt_length=_take(scene_s, "belt_length", 2.0, float, label),
        belt_width=_take(scene_s, "belt_width", 0.8, float, label),
        upstream_length=_take(scene_s, "upstream_length", 1.6, float, label),
        diverter=diverter,
    )
    items = ItemSpec(
        length=_take(items_s, "length", 0.07, float, label),
        width=_take(items_s, "width", 0.07, float, label),
        height=_take(items_s, "height", 0.02, float, label),
        mass=_take(items_s, "mass", 0.0491, float, label),
    )
    model = ModelParams(
        belt_speed=_take(model_s, "v_belt", 0.13, float, label),
        eps_factor=_take(model_s, "eps_factor", 5.5, float, label),
        sigma=_take(model_s, "sigma", 10000.0, float, label),
        steepness=_take(model_s, "heaviside_h", 50.0, float, label),
        item_count=_take(items_s, "count", 100, int, label),
    )
    solver = SolverConfig(
        dt=_take(solver_s, "dt", 0.002, float, label),
        t_end=_take(solver_s, "t_end", 40.0, float, label),
        cfl_max=_take(solver_s, "cfl_max", 0.9, float, label),
        probe_interval=_take(solver_s, "probe_interval", 0.1, float, label),
    )
    spec = ScenarioSpec(
        scene=scene,
        items=items,
        model=model,
        solver=solver,
        placements=tuple(placements),
        dx=_take(solver_s, "dx", 0.01, float, label),
        dy=_take(solver_s, "dy", 0.01, float, label),
    )
    scene.validate()
    items.validate()
    model.validate()
    solver.validate()
    if spec.dx <= 0.0 or spec.dy <= 0.0:
        raise ValidationError(f"{label}: cell sizes must be positive")
    return spec


def load_scenario(path) -> ScenarioSpec:
    """Read and validate a scenario file. Missing files raise OSError; parse and
    validation problems raise ValidationError with file and line context."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return loads_scenario(text, label=str(path))
