"""Mass-flow curves, discrete error norms, calibration sweeps, snapshot export."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError, ValidationError
from .geometry import CellMask, DensityField, GridSpec, SceneGeometry

SWEEP_JOBS_ENV = "BELTFLOW_SWEEP_JOBS"


@dataclass
class MassFlowCurve:
    """Accumulated mass past the reference line x = 0 over time."""

    times: np.ndarray    # sample times [s], strictly increasing
    mass_kg: np.ndarray  # accumulated mass [kg]

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.mass_kg = np.asarray(self.mass_kg, dtype=float)
        if self.times.shape != self.mass_kg.shape or self.times.ndim != 1:
            raise ValidationError("curve needs matching 1D time and mass arrays")
        if self.times.size == 0:
            raise ValidationError("curve needs at least one sample")
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValidationError("curve sample times must be strictly increasing")

    @property
    def final_mass(self) -> float:
        return float(self.mass_kg[-1])


def sample_outflow(state, mass_scale: float) -> tuple[float, float]:
    """One probe sample: current time and the accumulated reference-line flux
    converted to kilograms."""
    return state.time, mass_scale * state.ref_outflow


def _resample_onto_ref(sim: MassFlowCurve, ref: MassFlowCurve) -> np.ndarray:
    if ref.times.size < 2:
        raise ValidationError("reference curve needs at least 2 samples")
    if sim.times[-1] < ref.times[0] or sim.times[0] > ref.times[-1]:
        raise ValidationError("simulation and reference time ranges do not overlap")
    # np.interp extends with the boundary values, which is the right behavior
    # for accumulated-mass curves (flat before the first and after the last sample)
    return np.interp(ref.times, sim.times, sim.mass_kg)


def _dt_weights(t: np.ndarray) -> np.ndarray:
    w = np.empty_like(t)
    w[1:-1] = 0.5 * (t[2:] - t[:-2])
    w[0] = 0.5 * (t[1] - t[0])
    w[-1] = 0.5 * (t[-1] - t[-2])
    return w


def l2_error(sim: MassFlowCurve, ref: MassFlowCurve) -> float:
    """Discrete L2 distance on the reference time grid: sqrt(sum d_k^2 dt_k).

    The simulated curve is linearly interpolated onto the reference's own
    sample times; dt_k is the time span attributed to sample k, so the weights
    add up to the covered duration.
    """
    d = _resample_onto_ref(sim, ref) - ref.mass_kg
    return float(math.sqrt(float(np.sum(d * d * _dt_weights(ref.times)))))


def linf_error(sim: MassFlowCurve, ref: MassFlowCurve) -> float:
    """Largest pointwise deviation on the reference time grid."""
    d = _resample_onto_ref(sim, ref) - ref.mass_kg
    return float(np.max(np.abs(d)))


@dataclass
class ErrorReport:
    """Outcome of one calibration run against the reference curve."""

    eps_factor: float
    eps_mps: float
    l2_kg: float
    linf_kg: float
    error: str | None = None  # set when the run failed

    @property
    def ok(self) -> bool:
        return self.error is None


def epsilon_sweep(scenario_spec, eps_factors, ref: MassFlowCurve, seed: int = 0, jobs: int | None = None):
    """Run one simulation per interaction-strength factor and rank them by the
    discrete L2 distance to the reference curve.

    All runs share the same placements (generated once from `seed` when the
    scenario carries none). Failed runs are reported and skipped in the argmin.
    Returns (reports sorted by factor, best report or None); ties break toward
    the smaller factor.
    """
    from .scenario import prepare_scenario, resolve_placements  # avoid import cycle
    from .solver import run

    factors = [float(f) for f in eps_factors]
    if not factors:
        raise ValidationError("sweep needs at least one eps factor")
    if any(f < 0.0 for f in factors):
        raise ValidationError("eps factors must be non-negative")
    if len(set(factors)) != len(factors):
        raise ValidationError("eps factors must be distinct")
    factors = sorted(factors)

    spec = replace(scenario_spec, placements=resolve_placements(scenario_spec, seed))

    def one(factor: float) -> ErrorReport:
        model = replace(spec.model, eps_factor=factor)
        eps = factor * model.belt_speed
        try:
            result = run(prepare_scenario(replace(spec, model=model), seed))
            return ErrorReport(factor, eps, l2_error(result.curve, ref), linf_error(result.curve, ref))
        except (ValidationError, NumericalError) as exc:
            return ErrorReport(factor, eps, float("nan"), float("nan"), error=str(exc))

    if jobs is None:
        jobs = int(os.environ.get(SWEEP_JOBS_ENV, "1"))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(one, factors))
    else:
        reports = [one(f) for f in factors]

    good = [r for r in reports if r.ok]
    best = min(good, key=lambda r: (r.l2_kg, r.eps_factor)) if good else None
    return reports, best


def diverter_band_mask(scene: SceneGeometry, grid: GridSpec, mask: CellMask, depth: float = 0.2) -> np.ndarray:
    """Fluid cells within `depth` upstream (in x) of the diverter plate, for the
    rows the plate crosses; used to probe congestion build-up."""
    if scene.diverter is None:
        raise ValidationError("scene has no diverter to measure against")
    (px, py), (qx, qy) = scene.diverter.endpoints()
    cx, cy = grid.center_mesh()
    y_lo, y_hi = min(py, qy), max(py, qy)
    rows = (cy >= y_lo - 0.5 * grid.dy) & (cy <= y_hi + 0.5 * grid.dy)
    dy_seg = qy - py if abs(qy - py) > 1e-12 else 1e-12
    x_line = px + (cy - py) * (qx - px) / dy_seg
    return rows & (cx < x_line) & (cx >= x_line - depth) & mask.fluid


def export_snapshot(field: DensityField, path) -> tuple[str, str]:
    """Write the density as <path>.csv (dense matrix) and <path>.pgm (8-bit).

    Pixel values encode ink intensity: 0 for empty cells up to 255 where the
    density reaches or exceeds the maximum (rounded half-up). Rows run from the
    far skirt board down to y = 0, i.e. the image is oriented like a plan view.
    """
    base = str(path)
    # image rows top-to-bottom = y descending
    plan = field.rho.T[::-1, :]
    levels = np.floor(np.clip(plan, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    ny, nx = plan.shape
    pgm_path = base + ".pgm"
    csv_path = base + ".csv"
    with open(pgm_path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n255\n".encode("ascii"))
        fh.write(levels.tobytes())
    with open(csv_path, "w", encoding="ascii") as fh:
        for row in plan:
            fh.write(",".join(format(v, ".17g") for v in row))
            fh.write("\n")
    return csv_path, pgm_path
