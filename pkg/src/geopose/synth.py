"""Box-world scenes and an exact affine renderer used as ground truth.

A scene is a ground grid (1 px = 1 m horizontally) carrying axis-aligned
boxes. Rendering at pose ``(s, angle)`` moves every ground cell ``g`` to
``g + s * h_g * (cos, sin)`` where ``h_g`` is the tallest box covering it,
resolving collisions with a taller-wins z-buffer. Only roofs and bare
ground are drawn; image cells that nothing lands on (the walls) stay
invalid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError
from .geometry import GeocentricPose, PointPair, flow_field
from .raster import FlowField, OcclusionMap, Raster, splat_winners

MIN_EXTENT = 32


@dataclass(frozen=True)
class Box:
    """Footprint covers columns ``[x0, x1)`` and rows ``[y0, y1)``."""

    id: int
    x0: int
    y0: int
    x1: int
    y1: int
    height: float


@dataclass(frozen=True)
class Terrain:
    """Planar ground elevation ``c + gx*x + gy*y`` in meters."""

    c: float = 0.0
    gx: float = 0.0
    gy: float = 0.0

    def at(self, x, y):
        return self.c + self.gx * np.asarray(x, dtype=np.float64) + self.gy * np.asarray(y, dtype=np.float64)


@dataclass(frozen=True)
class SceneSpec:
    n_boxes: int = 4
    height_range: tuple[float, float] = (3.0, 30.0)
    size_range: tuple[int, int] = (8, 32)
    extent: tuple[int, int] = (128, 128)


@dataclass
class SyntheticScene:
    extent: tuple[int, int]  # (width, height) in ground pixels
    boxes: list[Box] = field(default_factory=list)
    terrain: Terrain = field(default_factory=Terrain)

    def __post_init__(self):
        w, h = self.extent
        ids = [b.id for b in self.boxes]
        if len(set(ids)) != len(ids) or any(i <= 0 for i in ids):
            raise InvalidArgumentError("box ids must be unique and > 0")
        for b in self.boxes:
            if not (0 <= b.x0 < b.x1 <= w and 0 <= b.y0 < b.y1 <= h):
                raise InvalidArgumentError(f"box {b.id} footprint lies outside the extent")
            if not (math.isfinite(b.height) and b.height >= 0):
                raise InvalidArgumentError(f"box {b.id} height must be finite and >= 0")

    @property
    def shape(self) -> tuple[int, int]:
        return self.extent[1], self.extent[0]

    def scaled_heights(self, factor: float) -> "SyntheticScene":
        return replace(self, boxes=[replace(b, height=b.height * factor) for b in self.boxes])

    def to_json(self) -> dict:
        return {
            "extent": list(self.extent),
            "boxes": [vars(b) for b in self.boxes],
            "terrain": vars(self.terrain),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SyntheticScene":
        return cls(
            extent=tuple(doc["extent"]),
            boxes=[Box(**b) for b in doc["boxes"]],
            terrain=Terrain(**doc.get("terrain", {})),
        )


def generate_scene(seed: int, spec: SceneSpec = SceneSpec()) -> SyntheticScene:
    """Random box world, fully determined by ``seed``. Boxes may overlap."""
    w, h = spec.extent
    lo_h, hi_h = spec.height_range
    lo_sz, hi_sz = spec.size_range
    if w < MIN_EXTENT or h < MIN_EXTENT:
        raise InvalidArgumentError(f"extent must be at least {MIN_EXTENT}x{MIN_EXTENT}, got {w}x{h}")
    if spec.n_boxes < 0 or lo_h > hi_h or lo_h < 0 or lo_sz > hi_sz or lo_sz < 1:
        raise InvalidArgumentError(f"empty or invalid range in scene spec {spec}")
    if lo_sz > min(w, h):
        raise InvalidArgumentError(f"minimum box size {lo_sz} exceeds the extent {w}x{h}")

    rng = np.random.default_rng(seed)
    boxes = []
    for i in range(spec.n_boxes):
        bw = int(rng.integers(lo_sz, min(hi_sz, w) + 1))
        bh = int(rng.integers(lo_sz, min(hi_sz, h) + 1))
        x0 = int(rng.integers(0, w - bw + 1))
        y0 = int(rng.integers(0, h - bh + 1))
        height = float(rng.uniform(lo_h, hi_h))
        boxes.append(Box(i + 1, x0, y0, x0 + bw, y0 + bh, height))
    return SyntheticScene((w, h), boxes)


def ground_maps(scene: SyntheticScene) -> tuple[np.ndarray, np.ndarray]:
    """Per ground cell: tallest covering height and its box id (0 = bare ground).

    Equal heights go to the lowest id.
    """
    rows, cols = scene.shape
    heights = np.zeros((rows, cols))
    ids = np.zeros((rows, cols), dtype=np.int64)
    for b in sorted(scene.boxes, key=lambda b: (b.height, -b.id)):
        heights[b.y0 : b.y1, b.x0 : b.x1] = b.height
        ids[b.y0 : b.y1, b.x0 : b.x1] = b.id
    return heights, ids


def _ground_texture(ids: np.ndarray) -> np.ndarray:
    rows, cols = ids.shape
    yy, xx = np.mgrid[0:rows, 0:cols]
    checker = ((xx // 8 + yy // 8) % 2).astype(np.float64)
    rgb = np.stack([0.20 + 0.05 * checker, 0.30 + 0.05 * checker, 0.15 + 0.05 * checker], axis=-1)
    roof = ids > 0
    tone = np.modf(ids * 0.6180339887498949)[0]
    rgb[roof] = np.stack([0.5 + 0.5 * tone, 0.4 + 0.3 * (1 - tone), 0.6 * tone + 0.2], axis=-1)[roof]
    return rgb


@dataclass(eq=False)
class RenderBundle:
    image: Raster
    heights: Raster
    flow: FlowField
    instances: Raster
    footprints: Raster
    occluded_ground: OcclusionMap
    pose: GeocentricPose


def render(scene: SyntheticScene, s: float, angle: float, threads: int = 1) -> RenderBundle:
    """Render ``scene`` through an affine view with scale ``s`` and ``angle``.

    Every output raster is in image space except ``footprints`` and
    ``occluded_ground``, which live on the ground grid (same size).
    """
    if not (math.isfinite(s) and s >= 0):
        raise InvalidArgumentError(f"render scale must be finite and >= 0, got {s}")
    rows, cols = scene.shape
    hg, ids = ground_maps(scene)
    yy, xx = np.mgrid[0:rows, 0:cols].astype(np.float64)
    dest_x = xx + s * hg * math.cos(angle)
    dest_y = yy + s * hg * math.sin(angle)
    winners = splat_winners(dest_x, dest_y, np.ones((rows, cols), bool), hg, (rows, cols), threads)

    seen = winners >= 0
    src = winners[seen]
    heights = np.full((rows, cols), np.nan)
    heights[seen] = hg.ravel()[src]
    instances = np.full((rows, cols), np.nan)
    instances[seen] = ids.ravel()[src]
    image = np.full((rows, cols, 3), np.nan)
    image[seen] = _ground_texture(ids).reshape(-1, 3)[src]

    # a ground cell is hidden when its image cell went to someone else
    ix = np.floor(dest_x + 0.5).astype(np.int64)
    iy = np.floor(dest_y + 0.5).astype(np.int64)
    inb = (ix >= 0) & (ix < cols) & (iy >= 0) & (iy < rows)
    own = np.arange(rows * cols).reshape(rows, cols)
    occluded = np.zeros((rows, cols), bool)
    occluded[inb] = winners[iy[inb], ix[inb]] != own[inb]

    pose = GeocentricPose(s, angle, Raster(heights))
    return RenderBundle(
        image=Raster(image),
        heights=Raster(heights),
        flow=flow_field(pose),
        instances=Raster(instances),
        footprints=Raster(ids.astype(np.float64)),
        occluded_ground=OcclusionMap(occluded),
        pose=pose,
    )


def vertical_pairs(scene: SyntheticScene, s: float, angle: float, per_box: int = 5) -> list[PointPair]:
    """Unrounded ground/roof correspondences at each box's centre and corners."""
    pairs = []
    c, sn = math.cos(angle), math.sin(angle)
    for b in scene.boxes:
        if b.height <= 0:
            continue
        pts = [
            ((b.x0 + b.x1 - 1) / 2, (b.y0 + b.y1 - 1) / 2),
            (b.x0, b.y0),
            (b.x1 - 1, b.y0),
            (b.x0, b.y1 - 1),
            (b.x1 - 1, b.y1 - 1),
        ][:per_box]
        for gx, gy in pts:
            m = s * b.height
            pairs.append(PointPair((gx, gy), (gx + m * c, gy + m * sn), b.height))
    return pairs
