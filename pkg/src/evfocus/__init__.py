"""Event-camera motion compensation by focus maximization.

Events are warped along parametric point trajectories, accumulated into an
image of warped events (IWE) and scored with one of 22 focus losses; a
conjugate-gradient search recovers the motion parameters.
"""

from .camera import CameraGeometry, PoseSample, PoseTrack, angular_velocity_from_poses, load_calib, load_poses
from .events import Event, EventArray, EventWindow, load_events, save_events, slice_by_count
from .iwe import (
    IweOptions,
    IweWithGradient,
    TimestampImage,
    accumulate_iwe,
    accumulate_iwe_with_gradient,
    timestamp_image,
)
from .losses import LOSS_NAMES, LossEval, LossSpec, evaluate, loss_gradient
from .optim import Objective, OptimConfig, OptimResult, grid_eval_2d, maximize, sweep_depth
from .warps import DepthWarp, FlowWarp, RotationWarp

__version__ = "0.1.0"

__all__ = [
    "CameraGeometry",
    "PoseSample",
    "PoseTrack",
    "angular_velocity_from_poses",
    "load_calib",
    "load_poses",
    "Event",
    "EventArray",
    "EventWindow",
    "load_events",
    "save_events",
    "slice_by_count",
    "IweOptions",
    "IweWithGradient",
    "TimestampImage",
    "accumulate_iwe",
    "accumulate_iwe_with_gradient",
    "timestamp_image",
    "LOSS_NAMES",
    "LossEval",
    "LossSpec",
    "evaluate",
    "loss_gradient",
    "Objective",
    "OptimConfig",
    "OptimResult",
    "grid_eval_2d",
    "maximize",
    "sweep_depth",
    "DepthWarp",
    "FlowWarp",
    "RotationWarp",
]
