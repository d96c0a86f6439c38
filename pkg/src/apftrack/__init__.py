"""Obstacle-avoiding path planning and lateral tracking for a single-track vehicle.

The pipeline plans a path with a modified artificial potential field, smooths
it (cubic spline, windowed quintic fits), assigns a curvature-limited speed
profile and tracks it in closed loop with either a curvature-calculation (CC)
controller or a constrained linear MPC.
"""

from .apf import ApfConfig, plan_path
from .cc import CcConfig, CcController
from .config import RunConfig, load_config, load_config_file, load_scenario, serialize
from .core import ReferencePath, Scenario, ValidationError, VehicleParams
from .fuzzy import FuzzyPreviewConfig, fuzzy_preview_time
from .mpc import MpcConfig, MpcController
from .qp import QpInfeasible, solve_qp
from .sim import PlanningFailed, RunMetrics, compare, plan, run, track
from .smoothing import SmoothingConfig, smooth_path
from .speed import assign_reference_speeds, dynamic_speed_limit

__version__ = "0.1.0"

__all__ = [
    "ApfConfig", "CcConfig", "CcController", "FuzzyPreviewConfig", "MpcConfig", "MpcController",
    "PlanningFailed", "QpInfeasible", "ReferencePath", "RunConfig", "RunMetrics", "Scenario",
    "SmoothingConfig", "ValidationError", "VehicleParams", "assign_reference_speeds", "compare",
    "dynamic_speed_limit", "fuzzy_preview_time", "load_config", "load_config_file", "load_scenario",
    "plan", "plan_path", "run", "serialize", "smooth_path", "solve_qp", "track",
]
