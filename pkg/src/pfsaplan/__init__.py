"""Measure-theoretic optimal path planning over probabilistic automata.

The package builds navigation plants from occupancy grids, computes the
measure-maximizing supervisor, stacks supervision passes into a globally
feasible gradient field, executes missions under uncontrollable
transitions, and identifies the uncertainty parameters from trajectory
logs.  A FastAPI service (``pfsaplan.service``) and a CLI (``pfsaplan``)
wrap the same functions.
"""

from .nav_model import (
    COMPASS,
    GridMap,
    NavAutomaton,
    UncertaintyModel,
    build_2d,
    build_heading,
    build_history,
    gamma_of,
    merge_history_to_2d,
    parse_grid,
    parse_uncertainty,
    serialize_grid,
    serialize_uncertainty,
)
from .pfsa import (
    MeasureSolveError,
    Pfsa,
    PfsaError,
    UndefinedTransitionError,
    build_pfsa,
    parse_pfsa,
    renormalized_measure,
    serialize_pfsa,
    string_measure,
)
from .planner import (
    AssembledPlan,
    GoalReachedError,
    InfeasibleStateError,
    PlanInvariantError,
    PlanStack,
    PlanStep,
    assemble,
    chi_goal_bound,
    feasible,
    gradient_path,
    next_states,
    plan_csv,
    plan_svg,
    recursive_plan,
    select_move,
)
from .simulator import (
    MissionResult,
    OutcomeEstimate,
    absorbing_probabilities,
    estimate_json,
    execute_mission,
    mission_trace_csv,
    monte_carlo,
    random_descent_policy,
    success_margin,
)
from .supervisor import (
    SupervisionResult,
    brute_force_optimize,
    critical_theta,
    optimize,
)
from .uncertainty import (
    GAMMA_PRESETS,
    DeviationContour,
    DeviationHistogram,
    IdentificationResult,
    TrajectoryLog,
    UncontrollableEstimate,
    delay_corrected,
    deviation_distribution,
    histogram_from_series,
    identify,
    identify_deviation,
    parse_contour,
    parse_histogram,
    parse_trajectory_csv,
    raw_deviation,
    serialize_contour,
    serialize_histogram,
    serialize_trajectory_csv,
    synthesize_log,
    uncontrollable_probabilities,
)

__version__ = "1.0.0"

__all__ = [
    "COMPASS",
    "GAMMA_PRESETS",
    "AssembledPlan",
    "DeviationContour",
    "DeviationHistogram",
    "GoalReachedError",
    "GridMap",
    "IdentificationResult",
    "InfeasibleStateError",
    "MeasureSolveError",
    "MissionResult",
    "NavAutomaton",
    "OutcomeEstimate",
    "Pfsa",
    "PfsaError",
    "PlanInvariantError",
    "PlanStack",
    "PlanStep",
    "SupervisionResult",
    "TrajectoryLog",
    "UncontrollableEstimate",
    "UncertaintyModel",
    "UndefinedTransitionError",
    "absorbing_probabilities",
    "assemble",
    "brute_force_optimize",
    "build_2d",
    "build_heading",
    "build_history",
    "build_pfsa",
    "chi_goal_bound",
    "critical_theta",
    "delay_corrected",
    "deviation_distribution",
    "estimate_json",
    "execute_mission",
    "feasible",
    "gamma_of",
    "gradient_path",
    "histogram_from_series",
    "identify",
    "identify_deviation",
    "merge_history_to_2d",
    "mission_trace_csv",
    "monte_carlo",
    "next_states",
    "optimize",
    "parse_contour",
    "parse_grid",
    "parse_histogram",
    "parse_pfsa",
    "parse_trajectory_csv",
    "parse_uncertainty",
    "plan_csv",
    "plan_svg",
    "random_descent_policy",
    "raw_deviation",
    "recursive_plan",
    "renormalized_measure",
    "select_move",
    "serialize_contour",
    "serialize_grid",
    "serialize_histogram",
    "serialize_pfsa",
    "serialize_trajectory_csv",
    "serialize_uncertainty",
    "string_measure",
    "success_margin",
    "synthesize_log",
    "uncontrollable_probabilities",
    "__version__",
]
