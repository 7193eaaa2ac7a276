"""Deterministic simulation of speed-scaled human-robot collaboration.

The package couples capsule-based separation monitoring, analytic per-tick
speed scaling, a budgeted predictive supervisor, and multimodal command
fusion into a reproducible discrete-time loop, with reporting and a live
bridge on top.
"""

from .engine import (
    ComparisonResult,
    EpisodeResult,
    HumanScript,
    HumanWaypoint,
    Scenario,
    Simulation,
    compare_runs,
    point_to_config,
    run_episode,
)
from .geom import (
    Capsule,
    CapsuleAttachment,
    Joint,
    KinematicChain,
    capsule_separation,
    forward_kinematics,
)
from .predictor import PredictiveSimulator, PredictorConfig, check_time
from .safety import (
    IsoParams,
    JointLimits,
    ScalingResult,
    iso_speed_limit,
    separation_state,
    solve_scaling,
)
from .scenario import ScenarioError, load_scenario
from .stats import AnovaResult, f_cdf, f_inverse_cdf, one_way_anova
from .trajectory import ParamTrajectory, advance, build_path, eval_path, nominal_profile

__version__ = "0.1.0"

__all__ = [
    "AnovaResult",
    "Capsule",
    "CapsuleAttachment",
    "ComparisonResult",
    "EpisodeResult",
    "HumanScript",
    "HumanWaypoint",
    "IsoParams",
    "Joint",
    "JointLimits",
    "KinematicChain",
    "ParamTrajectory",
    "PredictiveSimulator",
    "PredictorConfig",
    "ScalingResult",
    "Scenario",
    "ScenarioError",
    "Simulation",
    "advance",
    "build_path",
    "capsule_separation",
    "check_time",
    "compare_runs",
    "eval_path",
    "f_cdf",
    "f_inverse_cdf",
    "forward_kinematics",
    "iso_speed_limit",
    "load_scenario",
    "nominal_profile",
    "one_way_anova",
    "point_to_config",
    "run_episode",
    "separation_state",
    "solve_scaling",
]
