"""Robust sum-rate maximization for transmissive-metasurface SWIPT downlinks."""

from .channel import ChannelSet, draw_channel_set
from .energy import EhParams, harvest, harvest_inverse
from .optimizer import (
    InfeasibleScenarioError,
    RobustSumRateOptimizer,
    SolutionState,
    alternating_optimization,
    export_trace,
)
from .robust import RobustConstraintSet, build_constraints
from .scenario import ScenarioConfig, UserGeometry, sample_user_positions
from .subproblems import sum_rate

__version__ = "0.1.0"

__all__ = [
    "ChannelSet",
    "draw_channel_set",
    "EhParams",
    "harvest",
    "harvest_inverse",
    "InfeasibleScenarioError",
    "RobustSumRateOptimizer",
    "SolutionState",
    "alternating_optimization",
    "export_trace",
    "RobustConstraintSet",
    "build_constraints",
    "ScenarioConfig",
    "UserGeometry",
    "sample_user_positions",
    "sum_rate",
    "__version__",
]
