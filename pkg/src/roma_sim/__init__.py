"""Simulation and optimisation of rotary and movable antenna (ROMA) multi-user MIMO downlinks."""

__version__ = "0.1.0"

from .baselines import ArchitectureSpec, DEConfig, antenna_selection, de_solve, run_architecture, run_fpa
from .channel import PathSet, sample_paths, steering, synthesize_channel, wave_vector
from .exceptions import (
    ConfigError,
    DegenerateChannelError,
    GradientFailureError,
    InfeasibleProblemError,
    InvalidArgumentError,
    RomaSimError,
)
from .experiments import SweepResult, convergence_trace, power_sweep, region_sweep
from .geometry import PanelGeometry, RegionSpec, absolute_positions, element_grid, project_min_distance, rotate_to_3d
from .metrics import SEReport, bound_corollary1, bound_theorem1, los_correlation, user_se
from .optimizer import OptimizerState, SolverConfig, solve
from .precoding import PrecoderSet, mr_precoder, zf_precoder
from .scenario import Scenario, draw_realization
