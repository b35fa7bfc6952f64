"""Time-sliced finite-difference solver for nonlinear diffusion problems
on domains whose shape changes — possibly discontinuously — in time.

The solver splits the time axis into slices, freezes the spatial domain
on each slice, advances an implicit scheme there, and glues the slices
together with a copy/boundary-data transfer rule at every knot.
Verification helpers check flux structure conditions, discrete energy
and comparison estimates, and convergence orders.
"""

from .diagnostics import (
    EstimateReport,
    MmsReport,
    RefinementStudy,
    energy_report,
    l1_contraction_report,
    max_principle_report,
    mms_report,
    node_gradients,
    refinement_study,
)
from .errors import (
    DegenerateSectionError,
    DomainRangeError,
    ExpressionError,
    GeometryError,
    InapplicableDiagnosticError,
    JacobianSingularError,
    MarginError,
    NumericEvalError,
    NumericInputError,
    ScenarioError,
    SlabflowError,
    SolverStallError,
    UndefinedDistanceError,
)
from .expressions import (
    Binary,
    Call,
    Name,
    Num,
    Unary,
    evaluate,
    parse_expr,
    to_source,
)
from .flux import (
    FluxModel,
    StructureReport,
    check_structure,
    evaluate_flux,
    jacobian_xi,
)
from .geometry import (
    Grid,
    DomainMask,
    EMPTY_REGION,
    ImplicitRegion,
    IntervalRegion,
    IntervalTrack,
    SlicePlan,
    TimeDomain,
    TrackSegment,
    build_slice_plan,
    classify_jump,
    hausdorff_distance,
    interval_difference,
    rasterize,
    sample_slab,
    sample_spacetime,
    section,
    side_limits,
    slab_hausdorff,
)
from .scenario_io import (
    bundled_scenario_paths,
    format_scenario,
    load_scenario,
    parse_scenario_text,
    scenario_hash,
    write_frames,
)
from .slice_solver import (
    BoundaryData,
    SliceProblem,
    SliceSolution,
    SolverConfig,
    StepStats,
    discrete_flux_divergence,
    eval_on_points,
    implicit_step,
    solve_slice,
)
from .stitcher import (
    OutputConfig,
    RunReport,
    Scenario,
    SpaceTimeField,
    initial_frame,
    knot_traces,
    run_scheme,
    transfer,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryData",
    "Binary",
    "Call",
    "DegenerateSectionError",
    "DomainMask",
    "DomainRangeError",
    "EMPTY_REGION",
    "EstimateReport",
    "ExpressionError",
    "FluxModel",
    "GeometryError",
    "Grid",
    "ImplicitRegion",
    "InapplicableDiagnosticError",
    "IntervalRegion",
    "IntervalTrack",
    "JacobianSingularError",
    "MarginError",
    "MmsReport",
    "Name",
    "Num",
    "NumericEvalError",
    "NumericInputError",
    "OutputConfig",
    "RefinementStudy",
    "RunReport",
    "ScenarioError",
    "Scenario",
    "SlabflowError",
    "SlicePlan",
    "SliceProblem",
    "SliceSolution",
    "SolverConfig",
    "SolverStallError",
    "SpaceTimeField",
    "StepStats",
    "StructureReport",
    "TimeDomain",
    "TrackSegment",
    "Unary",
    "UndefinedDistanceError",
    "build_slice_plan",
    "bundled_scenario_paths",
    "check_structure",
    "classify_jump",
    "discrete_flux_divergence",
    "energy_report",
    "eval_on_points",
    "evaluate",
    "evaluate_flux",
    "format_scenario",
    "hausdorff_distance",
    "implicit_step",
    "initial_frame",
    "interval_difference",
    "jacobian_xi",
    "knot_traces",
    "l1_contraction_report",
    "load_scenario",
    "max_principle_report",
    "mms_report",
    "node_gradients",
    "parse_expr",
    "parse_scenario_text",
    "rasterize",
    "refinement_study",
    "run_scheme",
    "sample_slab",
    "sample_spacetime",
    "scenario_hash",
    "section",
    "side_limits",
    "slab_hausdorff",
    "solve_slice",
    "to_source",
    "transfer",
    "write_frames",
]
