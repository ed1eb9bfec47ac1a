"""Label-consistent remap augmentations: rotation, scale and height.

Rotation and scale are plain inverse remaps of image, heights and flow,
with the pose labels transformed in closed form. Height augmentation has
no inverse map (the displacement depends on each source pixel's height),
so it is a forward splat along the pose direction with a height z-buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .geometry import GeocentricPose, flow_field, wrap_angle
from .raster import FlowField, Interp, Raster, remap_inverse, splat_forward


@dataclass(eq=False)
class AugmentedSample:
    image: Raster
    pose: GeocentricPose
    flow: FlowField
    provenance: list[dict] = field(default_factory=list)

    @classmethod
    def from_render(cls, bundle) -> "AugmentedSample":
        return cls(bundle.image, bundle.pose, bundle.flow)


def _center(shape) -> tuple[float, float]:
    rows, cols = shape
    return (cols - 1) / 2.0, (rows - 1) / 2.0


def rotate_points(points, d_angle: float, shape) -> np.ndarray:
    """Apply the rotation augmentation to (N, 2) pixel coordinates."""
    p = np.asarray(points, dtype=np.float64)
    cx, cy = _center(shape)
    c, s = math.cos(d_angle), math.sin(d_angle)
    x, y = p[..., 0] - cx, p[..., 1] - cy
    return np.stack([c * x + s * y + cx, -s * x + c * y + cy], axis=-1)


def scale_points(points, factor: float) -> np.ndarray:
    return np.asarray(points, dtype=np.float64) * factor


def rotate_augment(sample: AugmentedSample, d_angle: float, interp: Interp = "bilinear", threads: int = 1) -> AugmentedSample:
    """Rotate about the raster centre by ``d_angle``; the label angle becomes ``angle - d_angle``."""
    if not math.isfinite(d_angle):
        raise InvalidArgumentError("rotation must be finite")
    cx, cy = _center(sample.image.shape)
    c, s = math.cos(d_angle), math.sin(d_angle)

    def coord_map(qx, qy):
        x, y = qx - cx, qy - cy
        return c * x - s * y + cx, s * x + c * y + cy

    def remap(r):
        return remap_inverse(r, coord_map, interp, threads=threads)

    vec = remap(sample.flow.vectors)
    vx, vy = vec.band(0), vec.band(1)
    flow = FlowField(
        Raster(np.stack([c * vx + s * vy, -s * vx + c * vy], axis=-1)),
        remap(sample.flow.magnitudes),
    )
    pose = GeocentricPose(sample.pose.scale, wrap_angle(sample.pose.angle - d_angle), remap(sample.pose.heights))
    return AugmentedSample(
        remap(sample.image), pose, flow, sample.provenance + [{"op": "rotate", "rotate_rad": d_angle}]
    )


def scale_augment(sample: AugmentedSample, factor: float, interp: Interp = "bilinear", threads: int = 1) -> AugmentedSample:
    """Zoom about the origin by ``factor``; label scale and flow lengths grow by it."""
    if not (math.isfinite(factor) and factor > 0):
        raise InvalidArgumentError(f"scale factor must be > 0, got {factor}")

    def coord_map(qx, qy):
        return qx / factor, qy / factor

    def remap(r):
        return remap_inverse(r, coord_map, interp, threads=threads)

    vec = remap(sample.flow.vectors)
    mag = remap(sample.flow.magnitudes)
    flow = FlowField(Raster(vec.data * factor), Raster(mag.data * factor))
    pose = GeocentricPose(sample.pose.scale * factor, sample.pose.angle, remap(sample.pose.heights))
    return AugmentedSample(remap(sample.image), pose, flow, sample.provenance + [{"op": "scale", "scale": factor}])


def height_augment(sample: AugmentedSample, factor: float, threads: int = 1) -> AugmentedSample:
    """Multiply object heights by ``factor`` and redraw the image to match.

    Each above-ground pixel moves ``s*(factor-1)*h`` pixels along the pose
    direction and its height becomes ``factor*h``; taller results win
    collisions. Ground stays put unless something lands on it, and newly
    exposed cells are invalid in every output. Shadows are not touched.
    """
    if not (math.isfinite(factor) and factor >= 0):
        raise InvalidArgumentError(f"height factor must be finite and >= 0, got {factor}")
    pose = sample.pose
    h = pose.heights.band().astype(np.float64)
    img = sample.image.data
    stack = Raster(np.concatenate([img.astype(np.float64), h[:, :, None]], axis=2))
    shift = pose.scale * (factor - 1.0) * np.nan_to_num(h)
    c, s = math.cos(pose.angle), math.sin(pose.angle)

    out, _ = splat_forward(
        stack,
        lambda x, y: (x + shift * c, y + shift * s),
        np.nan_to_num(factor * h),
        threads=threads,
    )
    nch = img.shape[2]
    image = Raster(out.data[:, :, :nch].astype(img.dtype))
    new_pose = GeocentricPose(pose.scale, pose.angle, Raster(factor * out.data[:, :, nch]))
    return AugmentedSample(
        image, new_pose, flow_field(new_pose), sample.provenance + [{"op": "height", "height_factor": factor}]
    )
