"""Validity-masked rasters and the two warp engines built on them.

Invalid pixels are stored as NaN in every channel. Coordinates follow the
raster layout: ``x`` is the column index (increasing right) and ``y`` the
row index (increasing down).

Two engines do all pixel motion in the package:

* :func:`remap_inverse` pulls every output pixel from a source coordinate
  (rotation, scaling, orthorectification).
* :func:`splat_forward` pushes every valid source pixel to a destination
  cell with a z-buffer (height augmentation, rectification, rendering).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .errors import InvalidArgumentError

Interp = Literal["nearest", "bilinear"]
CoordMap = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]

_NO_WINNER = np.iinfo(np.int64).max


@dataclass(eq=False)
class Raster:
    """A (rows, cols, channels) float grid with NaN marking invalid pixels."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] < 1:
            raise InvalidArgumentError(f"raster data must be 2-D or 3-D, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if arr.shape[2] > 1:
            bad = np.isnan(arr).any(axis=2)
            if bad.any() and not np.isnan(arr[bad]).all():
                arr = arr.copy()
                arr[bad] = np.nan
        self.data = arr

    @classmethod
    def full(cls, rows: int, cols: int, channels: int = 1, fill: float = np.nan, dtype=np.float64) -> "Raster":
        return cls(np.full((rows, cols, channels), fill, dtype=dtype))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height_px(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return ~np.isnan(self.data[:, :, 0])

    def band(self, c: int = 0) -> np.ndarray:
        return self.data[:, :, c]

    def copy(self) -> "Raster":
        return Raster(self.data.copy())

    def identical(self, other: "Raster") -> bool:
        """Bit-exact comparison, NaN payloads included."""
        return (
            self.data.shape == other.data.shape
            and self.data.dtype == other.data.dtype
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(eq=False)
class FlowField:
    """Per-pixel ground-to-surface vectors (2 channels) and their lengths."""

    vectors: Raster
    magnitudes: Raster

    def __post_init__(self):
        if self.vectors.channels != 2 or self.magnitudes.channels != 1:
            raise InvalidArgumentError("flow needs a 2-channel vector raster and a 1-channel magnitude raster")
        if self.vectors.shape != self.magnitudes.shape:
            raise InvalidArgumentError("flow vector and magnitude rasters differ in size")


@dataclass(eq=False)
class OcclusionMap:
    occluded: np.ndarray

    def __post_init__(self):
        self.occluded = np.asarray(self.occluded, dtype=bool)


def as_raster(x) -> Raster:
    return x if isinstance(x, Raster) else Raster(np.asarray(x))


def row_tiles(rows: int, threads: int) -> list[tuple[int, int]]:
    """Split ``rows`` into at most ``threads`` contiguous bands, in order."""
    n = max(1, min(int(threads), rows))
    edges = np.linspace(0, rows, n + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _run_tiles(fn, tiles, threads):
    if threads <= 1 or len(tiles) == 1:
        return [fn(*t) for t in tiles]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda t: fn(*t), tiles))


def round_half_up(v: np.ndarray) -> np.ndarray:
    """Nearest-integer rounding with halves going up (no banker's rounding)."""
    return np.floor(v + 0.5)


def _sample_nearest(data, valid, sx, sy):
    rows, cols, ch = data.shape
    ix = round_half_up(sx)
    iy = round_half_up(sy)
    ok = np.isfinite(ix) & np.isfinite(iy) & (ix >= 0) & (ix < cols) & (iy >= 0) & (iy < rows)
    ixc = np.where(ok, ix, 0).astype(np.intp)
    iyc = np.where(ok, iy, 0).astype(np.intp)
    ok &= valid[iyc, ixc]
    out = np.full(sx.shape + (ch,), np.nan, dtype=data.dtype)
    out[ok] = data[iyc[ok], ixc[ok]]
    return out


def _sample_bilinear(data, valid, sx, sy):
    rows, cols, ch = data.shape
    finite = np.isfinite(sx) & np.isfinite(sy)
    sx = np.where(finite, sx, -1.0)
    sy = np.where(finite, sy, -1.0)
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    # zero-weight neighbours are not part of the stencil
    x1 = np.where(fx > 0, x0 + 1, x0)
    y1 = np.where(fy > 0, y0 + 1, y0)
    ok = finite & (x0 >= 0) & (x1 < cols) & (y0 >= 0) & (y1 < rows)
    x0 = np.where(ok, x0, 0).astype(np.intp)
    x1 = np.where(ok, x1, 0).astype(np.intp)
    y0 = np.where(ok, y0, 0).astype(np.intp)
    y1 = np.where(ok, y1, 0).astype(np.intp)
    ok &= valid[y0, x0] & valid[y0, x1] & valid[y1, x0] & valid[y1, x1]

    out = np.full(sx.shape + (ch,), np.nan, dtype=data.dtype)
    if not ok.any():
        return out
    x0, x1, y0, y1 = x0[ok], x1[ok], y0[ok], y1[ok]
    fx = fx[ok][:, None]
    fy = fy[ok][:, None]
    d = data.astype(np.float64, copy=False)
    top = d[y0, x0] * (1.0 - fx) + d[y0, x1] * fx
    bot = d[y1, x0] * (1.0 - fx) + d[y1, x1] * fx
    out[ok] = top * (1.0 - fy) + bot * fy
    return out


def remap_inverse(
    src: Raster,
    coord_map: CoordMap,
    interp: Interp = "bilinear",
    out_shape: tuple[int, int] | None = None,
    threads: int = 1,
) -> Raster:
    """Resample ``src`` so that ``out[q] = src[coord_map(q)]``.

    ``coord_map`` receives float arrays of output column and row coordinates
    and returns the matching source coordinates. Bilinear samples whose
    stencil touches an invalid or out-of-bounds pixel are invalid; nearest
    samples are invalid when the rounded source pixel is.

    The output grid is split into row bands for ``threads`` workers. Each
    output pixel depends only on its own coordinates, so the result is
    identical for every thread count.
    """
    src = as_raster(src)
    rows, cols = out_shape if out_shape is not None else src.shape
    if interp not in ("nearest", "bilinear"):
        raise InvalidArgumentError(f"unknown interpolation {interp!r}")
    sampler = _sample_nearest if interp == "nearest" else _sample_bilinear
    valid = src.valid
    out = np.empty((rows, cols, src.channels), dtype=src.data.dtype)

    def work(r0, r1):
        ys, xs = np.mgrid[r0:r1, 0:cols].astype(np.float64)
        sx, sy = coord_map(xs, ys)
        sx = np.broadcast_to(np.asarray(sx, dtype=np.float64), xs.shape)
        sy = np.broadcast_to(np.asarray(sy, dtype=np.float64), xs.shape)
        out[r0:r1] = sampler(src.data, valid, sx, sy)

    _run_tiles(work, row_tiles(rows, threads), threads)
    return Raster(out)


def _reduce_candidates(cells, prio, src_idx, ncells):
    """Keep one candidate per cell: highest priority, then lowest source index."""
    best = np.full(ncells, -np.inf)
    np.maximum.at(best, cells, prio)
    top = prio == best[cells]
    win = np.full(ncells, _NO_WINNER, dtype=np.int64)
    np.minimum.at(win, cells[top], src_idx[top])
    hit = np.flatnonzero(win != _NO_WINNER)
    return hit, best[hit], win[hit]


def splat_winners(
    dest_x: np.ndarray,
    dest_y: np.ndarray,
    valid: np.ndarray,
    priority: np.ndarray,
    out_shape: tuple[int, int],
    threads: int = 1,
) -> np.ndarray:
    """Resolve a forward splat into a per-output-cell winning source index.

    Destinations are rounded half-up to integer cells; out-of-bounds or
    invalid sources are dropped. Returns an int64 array of ``out_shape``
    holding the flat (row-major) source index of the winner, or -1.

    Source rows are reduced in bands and the band survivors merged with the
    same (priority, lowest index) rule, which is a total order, so the
    winner never depends on the band layout.
    """
    rows_out, cols_out = out_shape
    ncells = rows_out * cols_out
    src_rows, src_cols = valid.shape
    if np.any(valid & ~np.isfinite(priority)):
        raise InvalidArgumentError("splat priority must be finite on valid pixels")

    def work(r0, r1):
        ix = round_half_up(dest_x[r0:r1])
        iy = round_half_up(dest_y[r0:r1])
        ok = valid[r0:r1] & np.isfinite(ix) & np.isfinite(iy)
        ok &= (ix >= 0) & (ix < cols_out) & (iy >= 0) & (iy < rows_out)
        rr, cc = np.nonzero(ok)
        cells = iy[rr, cc].astype(np.int64) * cols_out + ix[rr, cc].astype(np.int64)
        src_idx = (rr.astype(np.int64) + r0) * src_cols + cc
        return _reduce_candidates(cells, priority[r0:r1][rr, cc].astype(np.float64), src_idx, ncells)

    parts = _run_tiles(work, row_tiles(src_rows, threads), threads)
    if len(parts) == 1:
        hit, _, win = parts[0]
    else:
        cells = np.concatenate([p[0] for p in parts])
        prio = np.concatenate([p[1] for p in parts])
        src_idx = np.concatenate([p[2] for p in parts])
        hit, _, win = _reduce_candidates(cells, prio, src_idx, ncells)
    winners = np.full(ncells, -1, dtype=np.int64)
    winners[hit] = win
    return winners.reshape(rows_out, cols_out)


def gather_winners(src: Raster, winners: np.ndarray) -> Raster:
    hit = winners >= 0
    flat = src.data.reshape(-1, src.channels)
    out = np.full(winners.shape + (src.channels,), np.nan, dtype=src.data.dtype)
    out[hit] = flat[winners[hit]]
    return Raster(out)


def splat_forward(
    src: Raster,
    dest_of: CoordMap,
    priority: np.ndarray,
    out_shape: tuple[int, int] | None = None,
    threads: int = 1,
) -> tuple[Raster, np.ndarray]:
    """Push each valid source pixel to ``round(dest_of(p))`` with a z-buffer.

    Collisions go to the highest ``priority``; ties go to the lowest
    row-major source index. Cells nobody lands on are invalid. Returns the
    splatted raster and the boolean hit mask.
    """
    src = as_raster(src)
    out_shape = out_shape if out_shape is not None else src.shape
    ys, xs = np.mgrid[0 : src.height_px, 0 : src.width].astype(np.float64)
    dx, dy = dest_of(xs, ys)
    dx = np.broadcast_to(np.asarray(dx, dtype=np.float64), xs.shape)
    dy = np.broadcast_to(np.asarray(dy, dtype=np.float64), xs.shape)
    priority = np.broadcast_to(np.asarray(priority, dtype=np.float64), xs.shape)
    winners = splat_winners(dx, dy, src.valid, priority, out_shape, threads)
    return gather_winners(src, winners), winners >= 0
