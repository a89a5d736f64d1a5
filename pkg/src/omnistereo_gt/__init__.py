"""Dense depth and disparity ground truth for top-bottom omnidirectional stereo rigs."""

from .calibration import Extrinsics, optimize_extrinsics, reproject, residuals
from .completion import CompletionParams, PointCloud, RigConfig, complete_depth_map, evaluate_completion
from .geometry import EquirectGeometry, RigGeometry, depth_to_disparity, disparity_to_depth
from .rasters import DepthMap

__version__ = "0.1.0"

__all__ = [
    "CompletionParams",
    "DepthMap",
    "EquirectGeometry",
    "Extrinsics",
    "PointCloud",
    "RigConfig",
    "RigGeometry",
    "complete_depth_map",
    "depth_to_disparity",
    "disparity_to_depth",
    "evaluate_completion",
    "optimize_extrinsics",
    "reproject",
    "residuals",
]
