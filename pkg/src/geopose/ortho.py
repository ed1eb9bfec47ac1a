"""Orthorectification for an affine camera.

The forward map takes an image pixel ``p`` to the ortho grid::

    q = k * B^-1 (p - a3 * z0)

with ``B`` the camera's 2x2 block and ``a3`` its third column. Resampling
needs the opposite direction, ``p = B (q / k) + a3 * z0(q)``, and the
elevation model is looked up on the ortho (ground) grid. For a constant or
planar elevation the image->ortho direction is solved exactly; for a
raster elevation it is solved by fixed-point iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, InvalidArgumentError, SingularCameraError
from .geometry import AffineCamera, PointPair, pose_from_pair, project, wrap_angle
from .raster import Interp, Raster, _sample_bilinear, remap_inverse
from .scale_solver import solve_scale

SINGULAR_DET = 1e-12
FIXED_POINT_ITERS = 50


@dataclass(frozen=True, eq=False)
class ElevationModel:
    """Ground elevation on the ortho grid: planar ``c + gx*x + gy*y`` or a raster."""

    c: float = 0.0
    gx: float = 0.0
    gy: float = 0.0
    raster: Raster | None = None

    @classmethod
    def constant(cls, c: float) -> "ElevationModel":
        return cls(c=float(c))

    @classmethod
    def planar(cls, c: float, gx: float, gy: float) -> "ElevationModel":
        return cls(float(c), float(gx), float(gy))

    @classmethod
    def from_raster(cls, raster: Raster) -> "ElevationModel":
        return cls(raster=raster)

    @property
    def is_planar(self) -> bool:
        return self.raster is None

    def at(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.raster is None:
            return self.c + self.gx * x + self.gy * y
        # clamp so that lookups just outside the grid stay defined
        rows, cols = self.raster.shape
        xc = np.clip(x, 0, cols - 1)
        yc = np.clip(y, 0, rows - 1)
        return _sample_bilinear(self.raster.data[:, :, :1], self.raster.valid, xc, yc)[..., 0]

    def to_json(self) -> dict:
        if self.raster is not None:
            raise InvalidArgumentError("raster elevation models are stored as GPR, not JSON")
        return {"c": self.c, "gx": self.gx, "gy": self.gy}


@dataclass(frozen=True, eq=False)
class OrthoParams:
    camera: AffineCamera
    k: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k > 0):
            raise InvalidArgumentError(f"ortho pixel scale k must be > 0, got {self.k}")

    def check(self):
        det = float(np.linalg.det(self.camera.block))
        if abs(det) < SINGULAR_DET:
            raise SingularCameraError(f"camera 2x2 block is singular (det={det:.3g})")


def ortho_to_image(params: OrthoParams, elev: ElevationModel, qx, qy):
    """Image coordinates that ortho pixel ``(qx, qy)`` looks at."""
    b = params.camera.block
    a3 = params.camera.vertical
    z = elev.at(qx, qy)
    gx, gy = qx / params.k, qy / params.k
    return b[0, 0] * gx + b[0, 1] * gy + a3[0] * z, b[1, 0] * gx + b[1, 1] * gy + a3[1] * z


def image_to_ortho(params: OrthoParams, elev: ElevationModel, px, py):
    """Ortho coordinates of image pixel ``(px, py)`` (the forward remap)."""
    params.check()
    k = params.k
    binv = np.linalg.inv(params.camera.block)
    kb = k * binv
    u = kb @ params.camera.vertical  # ortho shift per meter of elevation
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    if elev.is_planar:
        # (I + u g^T) q = kB^-1 (p - a3 c)
        bx = kb[0, 0] * px + kb[0, 1] * py - u[0] * elev.c
        by = kb[1, 0] * px + kb[1, 1] * py - u[1] * elev.c
        m = np.eye(2) + np.outer(u, [elev.gx, elev.gy])
        if abs(np.linalg.det(m)) < SINGULAR_DET:
            raise SingularCameraError("elevation slope makes the ortho map non-invertible")
        mi = np.linalg.inv(m)
        return mi[0, 0] * bx + mi[0, 1] * by, mi[1, 0] * bx + mi[1, 1] * by
    qx0 = kb[0, 0] * px + kb[0, 1] * py
    qy0 = kb[1, 0] * px + kb[1, 1] * py
    qx, qy = qx0, qy0
    for _ in range(FIXED_POINT_ITERS):
        z = elev.at(qx, qy)
        qx, qy = qx0 - u[0] * z, qy0 - u[1] * z
    return qx, qy


def orthorectify(
    raster: Raster,
    params: OrthoParams,
    elev: ElevationModel,
    interp: Interp = "bilinear",
    out_shape: tuple[int, int] | None = None,
    threads: int = 1,
) -> Raster:
    """Resample an image onto the ortho grid (output defaults to the input size)."""
    params.check()
    return remap_inverse(
        raster, lambda qx, qy: ortho_to_image(params, elev, qx, qy), interp, out_shape=out_shape, threads=threads
    )


def ortho_inverse(
    raster: Raster,
    params: OrthoParams,
    elev: ElevationModel,
    interp: Interp = "bilinear",
    out_shape: tuple[int, int] | None = None,
    threads: int = 1,
) -> Raster:
    """Resample an ortho raster back into the image geometry."""
    params.check()
    return remap_inverse(
        raster, lambda px, py: image_to_ortho(params, elev, px, py), interp, out_shape=out_shape, threads=threads
    )


@dataclass(frozen=True)
class OrthoPoseCheck:
    scale: float
    angle: float
    max_deviation: float
    n_pairs: int


def ortho_pairs(scene, camera: AffineCamera, k: float, elev: ElevationModel) -> list[PointPair]:
    """Project box corner/centre verticals through the camera and into the ortho grid.

    Ground elevation at world ``(X, Y)`` is ``elev`` at ortho ``(k*X, k*Y)``,
    consistent with the ortho grid being ground-aligned.
    """
    params = OrthoParams(camera, k)
    pairs = []
    for b in scene.boxes:
        if b.height <= 0:
            continue
        for gx, gy in [
            ((b.x0 + b.x1 - 1) / 2, (b.y0 + b.y1 - 1) / 2),
            (b.x0, b.y0),
            (b.x1 - 1, b.y0),
            (b.x0, b.y1 - 1),
            (b.x1 - 1, b.y1 - 1),
        ]:
            z0 = float(np.asarray(elev.at(k * gx, k * gy)))
            p = project(camera, [[gx, gy, z0], [gx, gy, z0 + b.height]])
            qx, qy = image_to_ortho(params, elev, p[:, 0], p[:, 1])
            pairs.append(PointPair((float(qx[0]), float(qy[0])), (float(qx[1]), float(qy[1])), b.height))
    return pairs


def ortho_pose_check(scene, camera: AffineCamera, k: float, elev: ElevationModel) -> OrthoPoseCheck:
    """Fit (scale, angle) to ortho-space verticals and report how well they agree.

    The scale is the least-squares fit of pair magnitudes to heights; the
    angle is the circular mean of non-degenerate pair angles. The deviation
    is the largest per-pair departure in either scale (px/m) or angle (rad).
    """
    pairs = ortho_pairs(scene, camera, k, elev)
    if len(pairs) < 2:
        raise InsufficientDataError(f"need at least 2 vertical pairs, got {len(pairs)}")
    poses = [pose_from_pair(p) for p in pairs]
    heights = np.array([p.height for p in pairs])
    mags = np.array([pp.magnitude for pp in poses])
    s = solve_scale(heights, mags)
    moving = [pp for pp in poses if not pp.degenerate]
    if not moving:
        return OrthoPoseCheck(0.0, 0.0, float(max(abs(pp.scale - s) for pp in poses)), len(pairs))
    angle = wrap_angle(
        math.atan2(sum(math.sin(pp.angle) for pp in moving), sum(math.cos(pp.angle) for pp in moving))
    )
    dev = 0.0
    for pp in poses:
        dev = max(dev, abs(pp.scale - s))
        if not pp.degenerate:
            dev = max(dev, abs(wrap_angle(pp.angle - angle)))
    return OrthoPoseCheck(s, angle, dev, len(pairs))


def equivalent_pose(camera: AffineCamera, k: float = 1.0) -> tuple[float, float]:
    """Closed-form ortho-space (scale, angle) for flat terrain: the direction of ``k B^-1 a3``."""
    u = k * np.linalg.solve(camera.block, camera.vertical)
    m = float(np.hypot(*u))
    if m < 1e-12:
        return 0.0, 0.0
    return m, wrap_angle(math.atan2(u[1], u[0]))
