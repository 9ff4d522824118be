"""Finite-volume simulator for bulk cargo flow on a conveyor belt with a diverter."""

from .analysis import (
    ErrorReport,
    MassFlowCurve,
    diverter_band_mask,
    epsilon_sweep,
    export_snapshot,
    l2_error,
    linf_error,
    sample_outflow,
)
from .errors import CflError, MaskError, NumericalError, ValidationError
from .geometry import (
    FLUID,
    OUTFLOW,
    SOLID,
    CellMask,
    DensityField,
    DiverterSpec,
    GridSpec,
    SceneGeometry,
    StaticVelocityField,
    build_grid,
    build_static_field,
    mirror_scene,
    rasterize_mask,
)
from .kernels import (
    HeavisideParams,
    MollifierKernel,
    build_discrete_kernel,
    collision_operator,
    eval_mollifier,
    heaviside_activation,
    smooth,
    smoothed_gradient,
)
from .scenario import (
    ItemSpec,
    ModelParams,
    Placement,
    Scenario,
    ScenarioSpec,
    compute_mass_scale,
    compute_rho_max,
    load_scenario,
    loads_scenario,
    prepare_scenario,
    rasterize_initial_density,
    scatter_placements,
)
from .solver import (
    RunResult,
    SimState,
    SolverConfig,
    assemble_velocity,
    check_cfl,
    face_flux,
    run,
    step_dimensional_split,
)

__version__ = "0.1.0"
