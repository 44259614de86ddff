"""Distributed stochastic projected-reflected-gradient solvers for generalized
Nash equilibrium problems with affine coupling constraints."""

from .algorithms import (
    ORACLE_CALLS_PER_STEP,
    SOLVERS,
    IterateState,
    RunTrace,
    SolverConfig,
    default_step_sizes,
    initial_state,
    run,
    seg_step,
    sfbf_step,
    spfb_step,
    spprg_step,
    sprg_step,
)
from .game import (
    AffineMap,
    BilinearParams,
    BoxSet,
    CournotParams,
    CouplingConstraints,
    GameSpec,
    build_affine_game,
    build_bilinear_game,
    build_cournot_game,
    check_feasible,
    game_from_payload,
    pseudograd_mean,
    pseudograd_sample,
)
from .graph import DualGraph, build_cycle_plus, consensus_residual, laplacian_expand
from .metrics import (
    MetricsReport,
    ProjectionError,
    dual_consensus,
    evaluate,
    gap_function_small,
    kkt_residual,
    project_polyhedron,
    residual,
)
from .operators import (
    ExtendedSystem,
    OperatorConstants,
    PreconditionerPhi,
    PreconditionerPsi,
    PsiCheck,
    StackedPoint,
    StepSizes,
    dominance_bounds,
    estimate_constants,
    extended_lipschitz,
    forward_AB,
    forward_CD,
    psi_pd_check,
    reflected_margin,
    reflected_step_bound,
    resolvent_B,
    resolvent_D,
    step_sizes_from_bounds,
)
from .stochastic import BatchSchedule, ErrorStats, SampleStream, batch_size, empirical_error

__version__ = "0.1.0"
