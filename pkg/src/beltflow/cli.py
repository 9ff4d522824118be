"""Command-line entry points and CSV interchange.

Subcommands:
  run      integrate a scenario; writes outflow.csv, snapshots and summary.txt
  sweep    calibrate the interaction strength against a reference curve
  compare  print discrete error norms between two outflow CSV files

Exit codes: 0 success, 1 validation problem, 2 numerical failure (CFL/positivity),
3 I/O failure. All CSV output uses 17 significant digits so values round-trip
exactly; repeated runs with identical inputs and seed produce byte-identical
data files (summary.txt additionally records the wall-clock time).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .analysis import (
    MassFlowCurve,
    SWEEP_JOBS_ENV,
    epsilon_sweep,
    export_snapshot,
    l2_error,
    linf_error,
)
from .errors import NumericalError, ValidationError
from .scenario import ScenarioSpec, load_scenario, prepare_scenario
from .solver import RunResult, run


@dataclass
class RunManifest:
    """Everything one CLI invocation needs beyond the scenario file."""

    scenario: str
    out_dir: str
    snapshot_times: tuple[float, ...] = ()
    eps_factors: tuple[float, ...] = ()
    seed: int = 0
    dx: float | None = None  # grid override, applied to both directions
    dt: float | None = None


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_curve_csv(curve: MassFlowCurve, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "mass_kg"])
        for t, m in zip(curve.times, curve.mass_kg):
            writer.writerow([_fmt(t), _fmt(m)])


def read_curve_csv(path) -> MassFlowCurve:
    """Parse an outflow CSV (header `t_s,mass_kg` required); malformed content
    is reported with the offending row number."""
    times = []
    masses = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["t_s", "mass_kg"]:
            raise ValidationError(f"{path}: expected header 't_s,mass_kg'")
        for rownum, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ValidationError(f"{path}: row {rownum}: need two columns")
            try:
                t, m = float(row[0]), float(row[1])
            except ValueError:
                raise ValidationError(f"{path}: row {rownum}: values are not numbers") from None
            if times and t <= times[-1]:
                raise ValidationError(f"{path}: row {rownum}: times must be strictly increasing")
            times.append(t)
            masses.append(m)
    if not times:
        raise ValidationError(f"{path}: no data rows")
    return MassFlowCurve(np.asarray(times), np.asarray(masses))


def _load_spec(manifest: RunManifest) -> ScenarioSpec:
    spec = load_scenario(manifest.scenario)
    if manifest.dx is not None:
        spec = replace(spec, dx=manifest.dx, dy=manifest.dx)
    if manifest.dt is not None:
        spec = replace(spec, solver=replace(spec.solver, dt=manifest.dt))
    return spec


def _write_summary(path, manifest: RunManifest, scenario, result: RunResult) -> None:
    p = scenario.params
    g = scenario.grid
    lines = [
        f"scenario: {manifest.scenario}",
        f"seed: {manifest.seed}",
        f"belt: {scenario.scene.belt_length} x {scenario.scene.belt_width} m"
        f" (upstream {scenario.scene.upstream_length} m)",
        f"diverter: {scenario.scene.diverter}",
        f"grid: {g.nx} x {g.ny} cells, dx={g.dx} dy={g.dy}",
        f"dt: {scenario.config.dt} s, horizon: {scenario.config.t_end} s, steps: {result.n_steps}",
        f"belt_speed: {p.belt_speed} m/s",
        f"eps: {p.eps} m/s (factor {p.eps_factor})",
        f"sigma: {p.sigma}, heaviside_h: {p.steepness}",
        f"items: {p.item_count} x {scenario.items.mass} kg (rho_max_phys {p.rho_max_physical:.6g})",
        f"total_mass_kg: {_fmt(scenario.total_mass_kg)}",
        f"final_outflow_kg: {_fmt(result.curve.final_mass)}",
        f"final_domain_mass_kg: {_fmt(p.mass_scale * result.state.density.integral())}",
        f"cfl_peak: {_fmt(result.state.cfl_peak)}",
        f"speed_peak_mps: {_fmt(result.state.speed_peak)}",
        f"density_overshoot_peak: {_fmt(result.state.overshoot_peak)}",
        f"conservation_residual_rel: {_fmt(result.conservation_residual)}",
        f"wall_time_s: {result.wall_time_s:.3f}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_run(manifest: RunManifest) -> RunResult:
    """Integrate the scenario and write outflow.csv, snapshot files and a run
    summary into the output directory."""
    spec = _load_spec(manifest)
    scenario = prepare_scenario(spec, manifest.seed)
    result = run(scenario, snapshot_times=manifest.snapshot_times)
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_curve_csv(result.curve, out / "outflow.csv")
    for t, field in result.snapshots:
        export_snapshot(field, out / f"snapshot_{t:08.3f}s")
    _write_summary(out / "summary.txt", manifest, scenario, result)
    print(
        f"run finished: {result.n_steps} steps, outflow {result.curve.final_mass:.4f} kg "
        f"of {scenario.total_mass_kg:.4f} kg, CFL peak {result.state.cfl_peak:.4f}, "
        f"conservation residual {result.conservation_residual:.2e}"
    )
    return result


def cmd_sweep(manifest: RunManifest, ref_path) -> int:
    """Run the calibration sweep against a reference curve and write sweep.csv;
    prints the factor minimizing the L2 distance."""
    if not manifest.eps_factors:
        raise ValidationError("sweep needs a non-empty --eps-factors list")
    spec = _load_spec(manifest)
    ref = read_curve_csv(ref_path)
    jobs = int(os.environ.get(SWEEP_JOBS_ENV, "1"))
    reports, best = epsilon_sweep(spec, manifest.eps_factors, ref, seed=manifest.seed, jobs=jobs)
    out = Path(manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["eps_factor", "eps_mps", "l2_kg", "linf_kg"])
        for r in reports:
            writer.writerow([_fmt(r.eps_factor), _fmt(r.eps_mps), _fmt(r.l2_kg), _fmt(r.linf_kg)])
    for r in reports:
        if not r.ok:
            print(f"eps_factor {r.eps_factor}: run failed: {r.error}", file=sys.stderr)
    if best is None:
        print("sweep failed: no run finished", file=sys.stderr)
        return 2
    print(
        f"argmin: eps_factor={best.eps_factor:g} eps={best.eps_mps:g} m/s "
        f"l2_kg={best.l2_kg:.6g} linf_kg={best.linf_kg:.6g}"
    )
    return 0


def cmd_compare(sim_csv, ref_csv) -> None:
    """Print L2, Linf and the final-mass difference between two curves
    (simulation resampled onto the reference's time grid)."""
    sim = read_curve_csv(sim_csv)
    ref = read_curve_csv(ref_csv)
    print(f"l2_kg: {l2_error(sim, ref):.9g}")
    print(f"linf_kg: {linf_error(sim, ref):.9g}")
    print(f"final_mass_diff_kg: {sim.final_mass - ref.final_mass:.9g}")


class _Parser(argparse.ArgumentParser):
    # usage problems are validation failures (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> tuple[float, ...]:
    items = [p for p in text.replace(",", " ").split() if p]
    try:
        return tuple(float(p) for p in items)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="beltflow", description="Bulk cargo flow simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario file")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for synthetic placements")
    common.add_argument("--dx", type=float, default=None, help="override cell size (both directions)")
    common.add_argument("--dt", type=float, default=None, help="override time step")

    p_run = sub.add_parser("run", parents=[common], help="integrate one scenario")
    p_run.add_argument("--snapshots", type=_float_list, default=(),
                       help="comma-separated snapshot times in seconds")

    p_sweep = sub.add_parser("sweep", parents=[common], help="calibrate the interaction strength")
    p_sweep.add_argument("--ref", required=True, help="reference outflow CSV")
    p_sweep.add_argument("--eps-factors", type=_float_list, required=True,
                         help="comma-separated multiples of the belt speed")

    p_cmp = sub.add_parser("compare", help="compare two outflow CSV files")
    p_cmp.add_argument("sim", help="simulated curve CSV")
    p_cmp.add_argument("ref", help="reference curve CSV")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.command == "run":
            manifest = RunManifest(ns.scenario, ns.out, tuple(ns.snapshots),
                                   seed=ns.seed, dx=ns.dx, dt=ns.dt)
            cmd_run(manifest)
            return 0
        if ns.command == "sweep":
            manifest = RunManifest(ns.scenario, ns.out, eps_factors=tuple(ns.eps_factors),
                                   seed=ns.seed, dx=ns.dx, dt=ns.dt)
            return cmd_sweep(manifest, ns.ref)
        if ns.command == "compare":
            cmd_compare(ns.sim, ns.ref)
            return 0
        parser.error(f"unknown command {ns.command!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
