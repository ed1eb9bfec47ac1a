"""Least-squares image scale from heights and magnitudes, plus the training loss.

The scale that best explains magnitudes from heights is the one-parameter
pseudo-inverse ``s = (h.h)^-1 h.m`` over jointly valid pixels. Its
gradients are closed form with ``N = sum(h*m)`` and ``D = sum(h*h)``::

    ds/dm_i = h_i / D
    ds/dh_i = (m_i * D - 2 * h_i * N) / D**2
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateScaleError, InvalidArgumentError
from .raster import Raster

DEGENERATE_SUM_SQ = 1e-12


def _as_array(x) -> np.ndarray:
    if isinstance(x, Raster):
        if x.channels != 1:
            raise InvalidArgumentError("scale solver takes single-channel rasters")
        return x.band()
    return np.asarray(x)


def _joint(h, m, mask):
    h = _as_array(h)
    m = _as_array(m)
    if h.shape != m.shape:
        raise InvalidArgumentError(f"height and magnitude shapes differ: {h.shape} vs {m.shape}")
    joint = ~np.isnan(h) & ~np.isnan(m)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != h.shape:
            raise InvalidArgumentError("mask shape does not match rasters")
        joint &= mask
    # float64 accumulation regardless of raster precision
    hv = h[joint].astype(np.float64)
    mv = m[joint].astype(np.float64)
    return h.shape, joint, hv, mv


def _sums(hv, mv):
    d = float(np.dot(hv, hv))
    if not d >= DEGENERATE_SUM_SQ:
        raise DegenerateScaleError(int(hv.size), d)
    return float(np.dot(hv, mv)), d


def solve_scale(h, m, mask=None) -> float:
    """Scale (pixels/meter) minimising ``sum((m - s*h)**2)`` over valid pixels.

    Pixels that are NaN in either input, or False in ``mask``, are ignored.
    Raises :class:`DegenerateScaleError` when the valid heights carry no
    signal (all ground, or nothing valid).
    """
    _, _, hv, mv = _joint(h, m, mask)
    n, d = _sums(hv, mv)
    return n / d


def solve_scale_gradient(h, m, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Analytic ``(ds/dh, ds/dm)`` shaped like the inputs, zero at ignored pixels."""
    shape, joint, hv, mv = _joint(h, m, mask)
    n, d = _sums(hv, mv)
    ds_dh = np.zeros(shape)
    ds_dm = np.zeros(shape)
    ds_dm[joint] = hv / d
    ds_dh[joint] = (mv * d - 2.0 * hv * n) / (d * d)
    return ds_dh, ds_dm


@dataclass(frozen=True)
class LossWeights:
    f_theta: float = 10.0
    f_s: float = 10.0
    f_h: float = 1.0
    f_m: float = 2.0

    def __post_init__(self):
        for name in ("f_theta", "f_s", "f_h", "f_m"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise InvalidArgumentError(f"loss weight {name} must be finite and >= 0, got {v}")


DEFAULT_WEIGHTS = LossWeights()


@dataclass(frozen=True)
class AngleEncoding:
    cos_t: float
    sin_t: float

    @classmethod
    def from_angle(cls, angle: float) -> "AngleEncoding":
        return cls(math.cos(angle), math.sin(angle))

    def as_array(self) -> np.ndarray:
        return np.array([self.cos_t, self.sin_t])


@dataclass
class PoseTarget:
    """One image's pose outputs (prediction or reference) for the loss."""

    angle: AngleEncoding
    scale: float
    heights: np.ndarray
    magnitudes: np.ndarray


@dataclass(frozen=True)
class LossComponents:
    angle: float
    scale: float
    height: float
    magnitude: float


def _pixel_mse(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ok = ~np.isnan(a) & ~np.isnan(b)
    if not ok.any():
        return 0.0
    return float(np.mean((a[ok] - b[ok]) ** 2))


def total_loss(
    pred: Sequence[PoseTarget],
    ref: Sequence[PoseTarget],
    weights: LossWeights = DEFAULT_WEIGHTS,
    labeled: Sequence[bool] | None = None,
) -> tuple[float, LossComponents]:
    """Weighted multi-task MSE over a batch.

    The angle term is the MSE of the (cos, sin) encoding per image, averaged
    over the batch; the scale term is the batch MSE of the scalar scales.
    Height and magnitude terms are the mean, over labeled images only, of
    each image's pixel MSE; unlabeled images add nothing to them.
    """
    if len(pred) == 0:
        raise InvalidArgumentError("empty batch")
    if len(pred) != len(ref):
        raise InvalidArgumentError(f"batch sizes differ: {len(pred)} vs {len(ref)}")
    labeled = [True] * len(pred) if labeled is None else list(labeled)
    if len(labeled) != len(pred):
        raise InvalidArgumentError("labeled flags do not match the batch size")

    l_theta = float(np.mean([np.mean((p.angle.as_array() - r.angle.as_array()) ** 2) for p, r in zip(pred, ref)]))
    l_s = float(np.mean([(p.scale - r.scale) ** 2 for p, r in zip(pred, ref)]))
    pairs = [(p, r) for p, r, lab in zip(pred, ref, labeled) if lab]
    if pairs:
        l_h = float(np.mean([_pixel_mse(p.heights, r.heights) for p, r in pairs]))
        l_m = float(np.mean([_pixel_mse(p.magnitudes, r.magnitudes) for p, r in pairs]))
    else:
        l_h = l_m = 0.0
    comps = LossComponents(l_theta, l_s, l_h, l_m)
    total = weights.f_theta * l_theta + weights.f_s * l_s + weights.f_h * l_h + weights.f_m * l_m
    return total, comps
