"""Frame-level bit allocation for light-field pseudo-sequence coding.

A light field is captured as a grid of perspective frames that get
coded as a pseudo-temporal sequence. This package assigns each frame a
bit budget that minimizes confidence-weighted distortion plus a
view-consistency penalty: per-frame power-law rate-distortion models
are fitted from trial compressions, a water-filling step solves the
budgeted minimization in closed form, a projected-descent step refines
it against the consistency cone penalty, and an iterative loop
alternates allocation with re-encoding until rates settle. Metrics
(weighted PSNR, discontinuity, average rate difference between curves)
and a CLI round out the pipeline.
"""

from .allocator import (
    AllocationProblem,
    AllocationResult,
    ConePenalty,
    allocate,
    build_cone_penalty,
    evaluate_cost,
    penalized_objective,
    predicted_distortions,
    project_rates,
    read_allocation_file,
    read_problem_file,
    solve_step1,
    solve_step2,
    write_allocation_file,
    write_problem_file,
)
from .encodesim import (
    EncoderAdapter,
    IterationEntry,
    IterationTrace,
    MockEncoder,
    MockEncoderConfig,
    MockSetup,
    mock_encode,
    read_mock_config,
    read_trace_csv,
    run_first_iteration,
    run_iteration,
    run_to_convergence,
    select_qp,
    trial_sweep,
    write_mock_config,
    write_trace_csv,
)
from .errors import (
    DegenerateWeights,
    DomainError,
    EncodeFailed,
    IncompleteInput,
    InfeasibleBudget,
    InsufficientPoints,
    InsufficientSamples,
    LfallocError,
    NoOverlap,
    NonDecreasingRD,
    NotConverged,
    ParseError,
    ShapeMismatch,
    WeightChannelAbsent,
)
from .lightfield import (
    FrameCoord,
    FrameGrid,
    PixelFrame,
    WeightSet,
    frame_weight,
    l1_distance,
    proximity,
    read_frame_grid,
    read_weight_map_csv,
    read_weight_pgm,
    spiral_order,
    unify_weights,
    write_frame_grid,
)
from .metrics import (
    CostBreakdown,
    DistortionSet,
    RDPoint,
    bd_rate,
    compute_sse,
    cost,
    discontinuity,
    read_curve_csv,
    read_sse_csv,
    weighted_distortion,
    wpsnr,
    write_curve_csv,
    write_sse_csv,
)
from .rdmodel import (
    LinearizedRD,
    RDModelParams,
    RDSample,
    eval_model,
    fit_power_model,
    linearize,
    read_models_csv,
    read_samples_csv,
    write_models_csv,
    write_samples_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationProblem",
    "AllocationResult",
    "ConePenalty",
    "CostBreakdown",
    "DegenerateWeights",
    "DistortionSet",
    "DomainError",
    "EncodeFailed",
    "EncoderAdapter",
    "FrameCoord",
    "FrameGrid",
    "IncompleteInput",
    "InfeasibleBudget",
    "InsufficientPoints",
    "InsufficientSamples",
    "IterationEntry",
    "IterationTrace",
    "LfallocError",
    "LinearizedRD",
    "MockEncoder",
    "MockEncoderConfig",
    "MockSetup",
    "NoOverlap",
    "NonDecreasingRD",
    "NotConverged",
    "ParseError",
    "PixelFrame",
    "RDModelParams",
    "RDPoint",
    "RDSample",
    "ShapeMismatch",
    "WeightChannelAbsent",
    "WeightSet",
    "allocate",
    "bd_rate",
    "build_cone_penalty",
    "compute_sse",
    "cost",
    "discontinuity",
    "eval_model",
    "evaluate_cost",
    "fit_power_model",
    "frame_weight",
    "l1_distance",
    "linearize",
    "mock_encode",
    "penalized_objective",
    "predicted_distortions",
    "project_rates",
    "proximity",
    "read_allocation_file",
    "read_curve_csv",
    "read_frame_grid",
    "read_mock_config",
    "read_models_csv",
    "read_problem_file",
    "read_samples_csv",
    "read_sse_csv",
    "read_trace_csv",
    "read_weight_map_csv",
    "read_weight_pgm",
    "run_first_iteration",
    "run_iteration",
    "run_to_convergence",
    "select_qp",
    "solve_step1",
    "solve_step2",
    "spiral_order",
    "trial_sweep",
    "unify_weights",
    "weighted_distortion",
    "wpsnr",
    "write_allocation_file",
    "write_curve_csv",
    "write_frame_grid",
    "write_mock_config",
    "write_models_csv",
    "write_problem_file",
    "write_samples_csv",
    "write_sse_csv",
    "write_trace_csv",
]
