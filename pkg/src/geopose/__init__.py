"""Affine geocentric pose for monocular remote-sensing imagery."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DegenerateScaleError,
    EmptyComparisonError,
    GeoposeError,
    InsufficientDataError,
    InvalidArgumentError,
    SingularCameraError,
)
from .raster import FlowField, OcclusionMap, Raster, remap_inverse, splat_forward  # noqa: E402
from .geometry import AffineCamera, GeocentricPose, PointPair, flow_field, pose_from_pair, project  # noqa: E402
from .scale_solver import LossWeights, solve_scale, solve_scale_gradient, total_loss  # noqa: E402

__all__ = [
    "AffineCamera",
    "DegenerateScaleError",
    "EmptyComparisonError",
    "FlowField",
    "GeocentricPose",
    "GeoposeError",
    "InsufficientDataError",
    "InvalidArgumentError",
    "LossWeights",
    "OcclusionMap",
    "PointPair",
    "Raster",
    "SingularCameraError",
    "flow_field",
    "pose_from_pair",
    "project",
    "remap_inverse",
    "solve_scale",
    "solve_scale_gradient",
    "splat_forward",
    "total_loss",
]
