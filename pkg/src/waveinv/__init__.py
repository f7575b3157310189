"""waveinv: reconstruction of permittivity and conductivity maps in a 2D
damped-wave model from noisy partial boundary observations, via
adjoint-state gradients and projected conjugate-gradient minimization of a
regularized misfit functional, with an indicator-driven multi-level mode."""

from .grid import (
    ALL_SIDES,
    Grid2D,
    RegionMask,
    Side,
    area_weights,
    build_grid,
    refine,
    region_mask,
    side_weights,
    time_weights,
)
from .fields import (
    AdmissibleSet,
    BoundaryTrace,
    CoefficientField,
    FieldKind,
    NoiseModel,
    Role,
    SpaceTimeField,
    add_noise,
    bump_perturbed,
    constant_coefficient,
    extract_trace,
    gaussian_coefficient,
    project,
    transfer_to_refined,
)
from .forward import (
    BcConfig,
    BcKind,
    SourceSpec,
    StabilityError,
    all_neumann_bc,
    discrete_energy,
    solve_forward,
)
from .adjoint import AdjointEnergyReport, adjoint_energy_monitor, solve_adjoint
from .objective import (
    ErrorMetrics,
    RegularizationParams,
    decomposition_identity_check,
    error_metrics,
    field_dot,
    field_norm,
    forward_defect,
    lagrangian,
    spacetime_dot,
    spacetime_norm,
    tikhonov,
    trace_dot,
    trace_norm_sq,
)
from .gradient import GradientSample, assemble_gradients, fd_gradient_oracle
from .optimizer import (
    AcgaControls,
    AcgaResult,
    CgaResult,
    CgState,
    InverseProblem,
    LevelReport,
    LogRow,
    RefinementFlags,
    StoppingTolerances,
    cg_step,
    fletcher_reeves,
    init_state,
    refinement_flags,
    run_acga,
    run_cga,
    step_size,
)

__version__ = "0.1.0"
