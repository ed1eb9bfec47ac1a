"""Affine camera model and closed-form geocentric pose.

Conventions used throughout the package:

* image frame is y-down: ``x`` = column, ``y`` = row;
* the pose angle points from a ground point toward its raised surface
  point, so the flow vector ``s * h * (cos a, sin a)`` is ground->surface
  and moving a surface pixel back to the ground subtracts it;
* angles are wrapped to ``[-pi, pi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidArgumentError
from .raster import FlowField, Raster, as_raster

DEGENERATE_MAGNITUDE = 1e-9


def wrap_angle(a):
    """Wrap radians into ``[-pi, pi)``."""
    w = np.mod(np.asarray(a, dtype=np.float64) + math.pi, 2.0 * math.pi) - math.pi
    # mod can return 2*pi for tiny negative inputs
    w = np.where(w >= math.pi, w - 2.0 * math.pi, w)
    return float(w) if np.ndim(w) == 0 else w


@dataclass(frozen=True, eq=False)
class AffineCamera:
    """2x3 matrix mapping world (X, Y, Z) meters to image (x, y) pixels."""

    a: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64)
        if a.shape != (2, 3):
            raise InvalidArgumentError(f"affine camera must be 2x3, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidArgumentError("affine camera has non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def block(self) -> np.ndarray:
        """The leading 2x2 (horizontal) block."""
        return self.a[:, :2]

    @property
    def vertical(self) -> np.ndarray:
        """Image displacement per meter of Z (third column)."""
        return self.a[:, 2]

    def to_json(self) -> dict:
        return {"a": self.a.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "AffineCamera":
        return cls(np.asarray(doc["a"], dtype=np.float64))


@dataclass(eq=False)
class GeocentricPose:
    """Image-level scale (px/m) and angle (rad) with per-pixel AGL heights (m)."""

    scale: float
    angle: float
    heights: Raster

    def __post_init__(self):
        if not (math.isfinite(self.scale) and math.isfinite(self.angle)):
            raise InvalidArgumentError("pose scale and angle must be finite")
        if self.scale < 0:
            raise InvalidArgumentError(f"pose scale must be >= 0, got {self.scale}")
        self.scale = float(self.scale)
        self.angle = wrap_angle(self.angle)
        self.heights = as_raster(self.heights)
        if self.heights.channels != 1:
            raise InvalidArgumentError("pose heights must be a single-channel raster")
        h = self.heights.band()
        v = self.heights.valid
        if np.any(np.isinf(h)) or np.any(h[v] < 0):
            raise InvalidArgumentError("valid heights must be finite and >= 0")

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])


@dataclass(frozen=True)
class PointPair:
    """A ground pixel, the pixel of the point ``height`` meters above it."""

    ground: tuple[float, float]
    surface: tuple[float, float]
    height: float


class PairPose(NamedTuple):
    angle: float
    magnitude: float
    scale: float
    degenerate: bool


def project(camera: AffineCamera, world) -> np.ndarray:
    """Project world point(s) of shape (3,) or (N, 3) to pixel coordinates."""
    p = np.asarray(world, dtype=np.float64)
    if p.shape[-1] != 3:
        raise InvalidArgumentError(f"world points need 3 coordinates, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise InvalidArgumentError("world point has non-finite coordinates")
    return p @ camera.a.T


def pose_from_pair(pair: PointPair) -> PairPose:
    """Angle, magnitude and scale of one vertical correspondence.

    A pair closer than 1e-9 px is a nadir observation: scale and angle are
    reported as zero with ``degenerate`` set.
    """
    if not pair.height > 0:
        raise InvalidArgumentError(f"pair height must be > 0, got {pair.height}")
    x1, y1 = pair.ground
    x2, y2 = pair.surface
    vals = (x1, y1, x2, y2, pair.height)
    if not all(math.isfinite(v) for v in vals):
        raise InvalidArgumentError("pair coordinates must be finite")
    dx, dy = x2 - x1, y2 - y1
    m = math.hypot(dx, dy)
    if m < DEGENERATE_MAGNITUDE:
        return PairPose(0.0, 0.0, 0.0, True)
    return PairPose(wrap_angle(math.atan2(dy, dx)), m, m / pair.height, False)


def flow_field(pose: GeocentricPose) -> FlowField:
    """Per-pixel ground->surface vectors ``s*h*(cos a, sin a)`` and magnitudes ``s*h``."""
    h = pose.heights.band().astype(np.float64)
    mag = pose.scale * h
    vec = np.stack([mag * math.cos(pose.angle), mag * math.sin(pose.angle)], axis=-1)
    return FlowField(Raster(vec), Raster(mag))
