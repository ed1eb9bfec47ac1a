"""Rectification of rasters to ground level, with occlusion maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage

from .errors import InvalidArgumentError
from .geometry import GeocentricPose
from .raster import OcclusionMap, Raster, as_raster, splat_forward

Mode = Literal["continuous", "categorical"]


@dataclass(eq=False)
class RectifiedBundle:
    rectified: Raster
    occlusion: OcclusionMap
    hit_mask: np.ndarray


def median_prefilter(heights: Raster, width: int) -> Raster:
    """Odd-width median filter over valid heights; invalid pixels stay invalid."""
    if width < 1 or width % 2 == 0:
        raise InvalidArgumentError(f"median width must be a positive odd integer, got {width}")
    h = heights.band()
    valid = heights.valid
    out = ndimage.median_filter(np.where(valid, h, 0.0), size=width, mode="nearest")
    return Raster(np.where(valid, out, np.nan))


def rectify_to_ground(
    raster,
    pose: GeocentricPose,
    mode: Mode = "continuous",
    median_width: int | None = None,
    threads: int = 1,
) -> RectifiedBundle:
    """Move every valid pixel from its surface location down to the ground.

    A pixel with height ``h`` lands on ``p - s*h*(cos a, sin a)`` rounded to
    the nearest cell; taller pixels win collisions so roofs cover the ground
    they stand on. Cells nothing lands on are reported as occluded.

    ``mode`` only documents intent: splatting copies values without
    blending, so categorical labels stay crisp either way.
    """
    if mode not in ("continuous", "categorical"):
        raise InvalidArgumentError(f"unknown rectification mode {mode!r}")
    raster = as_raster(raster)
    heights = pose.heights
    if heights.shape != raster.shape:
        raise InvalidArgumentError(f"heights {heights.shape} and raster {raster.shape} differ in size")
    if median_width:
        heights = median_prefilter(heights, median_width)

    h = heights.band().astype(np.float64)
    # a pixel without a height cannot be placed
    src = Raster(np.where(heights.valid[:, :, None], raster.data, np.nan))
    h0 = np.nan_to_num(h)
    dx = pose.scale * h0 * math.cos(pose.angle)
    dy = pose.scale * h0 * math.sin(pose.angle)
    out, hit = splat_forward(src, lambda x, y: (x - dx, y - dy), h0, threads=threads)
    return RectifiedBundle(out, OcclusionMap(~hit), hit)


def rectify_labels(mask, pose: GeocentricPose, threads: int = 1) -> RectifiedBundle:
    """Rectify a categorical label raster (building or instance ids)."""
    return rectify_to_ground(mask, pose, mode="categorical", threads=threads)
