"""Continuous-time optical flow from event cameras with spatio-temporal structural consistency."""

__version__ = "0.1.0"

from .errors import ConfigError, DomainError, NonFiniteError, ParseError, STSCError, ValidationError
from .events import Event, EventStream, SyntheticSceneSpec, generate_synthetic, load_events, save_events
from .kernels import BACKEND
from .losses import LossBreakdown, LossConfig, Objective, curriculum_weights, endpoint_loss, lsc_loss, tc_loss, total_loss
from .metrics import MetricsReport, angular_error, epe, evaluate, fwl, npe, pct_out
from .optimize import OptimizeConfig, estimate_flow, grid_search_oracle
from .trajectory import BezierFlowField, displacement, warp_event, warp_positions
from .voxel import BinGrid, VoxelGrid, build_voxel_grid
from .vwe import WarpedVolume, build_iwe, build_vwe, build_vwe_bin

__all__ = [
    "BACKEND",
    "BezierFlowField",
    "BinGrid",
    "ConfigError",
    "DomainError",
    "Event",
    "EventStream",
    "LossBreakdown",
    "LossConfig",
    "MetricsReport",
    "NonFiniteError",
    "Objective",
    "OptimizeConfig",
    "ParseError",
    "STSCError",
    "SyntheticSceneSpec",
    "ValidationError",
    "VoxelGrid",
    "WarpedVolume",
    "angular_error",
    "build_iwe",
    "build_voxel_grid",
    "build_vwe",
    "build_vwe_bin",
    "curriculum_weights",
    "displacement",
    "endpoint_loss",
    "epe",
    "estimate_flow",
    "evaluate",
    "fwl",
    "generate_synthetic",
    "grid_search_oracle",
    "load_events",
    "lsc_loss",
    "npe",
    "pct_out",
    "save_events",
    "tc_loss",
    "total_loss",
    "warp_event",
    "warp_positions",
]
