"""Evaluation metrics for heights, flow, angles and rectified building instances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyComparisonError, InsufficientDataError, InvalidArgumentError
from .raster import FlowField, Raster, as_raster

INCLUSION_IOU = 0.9


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    n: int


@dataclass(frozen=True)
class R2Result:
    r2: float
    rss: float
    tss: float


def _joint_values(pred, ref):
    """Jointly valid values. Rasters are masked per pixel, plain arrays per element."""
    if isinstance(pred, Raster) or isinstance(ref, Raster):
        pred, ref = as_raster(pred), as_raster(ref)
        if pred.data.shape != ref.data.shape:
            raise InvalidArgumentError(f"rasters differ in shape: {pred.data.shape} vs {ref.data.shape}")
        ok = pred.valid & ref.valid
        return pred.data[ok].astype(np.float64), ref.data[ok].astype(np.float64)
    p = np.asarray(pred, dtype=np.float64)
    r = np.asarray(ref, dtype=np.float64)
    if p.shape != r.shape:
        raise InvalidArgumentError(f"arrays differ in shape: {p.shape} vs {r.shape}")
    ok = ~np.isnan(p) & ~np.isnan(r)
    return p[ok], r[ok]


def error_stats(pred, ref) -> MetricsReport:
    """RMSE and MAE over jointly valid pixels (all channels pooled)."""
    p, r = _joint_values(pred, ref)
    if p.size == 0:
        raise EmptyComparisonError("no jointly valid pixels to compare")
    e = (p - r).ravel()
    return MetricsReport(math.sqrt(float(np.mean(e * e))), float(np.mean(np.abs(e))), int(e.size))


def angle_errors(pred, ref) -> np.ndarray:
    """Signed angle differences wrapped into (-pi, pi]."""
    p = np.atleast_1d(np.asarray(pred, dtype=np.float64))
    r = np.atleast_1d(np.asarray(ref, dtype=np.float64))
    if p.shape != r.shape:
        raise InvalidArgumentError("angle lists differ in length")
    if p.size == 0:
        raise EmptyComparisonError("no angles to compare")
    d = p - r
    e = math.pi - np.mod(math.pi - d, 2.0 * math.pi)
    # differences within rounding of the inputs are whole turns
    tol = 8.0 * np.spacing(np.maximum(np.maximum(np.abs(p), np.abs(r)), 2.0 * math.pi))
    return np.where(np.abs(e) <= tol, 0.0, e)


def angle_rmse(pred, ref) -> float:
    """RMSE of wrapped angle errors, in degrees. Each entry is one image."""
    e = angle_errors(pred, ref)
    return math.degrees(math.sqrt(float(np.mean(e * e))))


def endpoint_rmse(flow_pred: FlowField, flow_ref: FlowField) -> float:
    """RMSE of the per-pixel distance between predicted and reference vectors."""
    p = flow_pred.vectors
    r = flow_ref.vectors
    if p.data.shape != r.data.shape:
        raise InvalidArgumentError("flow fields differ in shape")
    ok = p.valid & r.valid
    if not ok.any():
        raise EmptyComparisonError("no jointly valid flow pixels to compare")
    d = p.data[ok].astype(np.float64) - r.data[ok].astype(np.float64)
    return math.sqrt(float(np.mean(np.sum(d * d, axis=1))))


def r_squared(pred, ref) -> R2Result:
    """Coefficient of determination clipped to [0, 1].

    With zero reference variance, a perfect prediction scores 1 and any
    residual scores 0.
    """
    p = np.asarray(pred, dtype=np.float64).ravel()
    r = np.asarray(ref, dtype=np.float64).ravel()
    if p.shape != r.shape:
        raise InvalidArgumentError("prediction and reference differ in length")
    ok = ~np.isnan(p) & ~np.isnan(r)
    p, r = p[ok], r[ok]
    if p.size < 2:
        raise InsufficientDataError(f"R^2 needs at least 2 samples, got {p.size}")
    rss = float(np.sum((r - p) ** 2))
    tss = float(np.sum((r - r.mean()) ** 2))
    if tss == 0.0:
        return R2Result(1.0 if rss == 0.0 else 0.0, rss, tss)
    return R2Result(max(0.0, 1.0 - rss / tss), rss, tss)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


@dataclass(frozen=True)
class InstanceIoURecord:
    instance_id: int
    iou_unrectified: float
    iou_rectified: float
    max_magnitude: float
    included: bool


@dataclass
class IoUAnalysis:
    records: list[InstanceIoURecord]
    curve: list[tuple[float, float]]
    skipped: list[int] = field(default_factory=list)

    def mean_included_iou(self) -> float:
        vals = [r.iou_rectified for r in self.records if r.included]
        return float(np.mean(vals)) if vals else float("nan")


def _ids(label: np.ndarray) -> set[int]:
    v = label[~np.isnan(label)]
    return {int(i) for i in np.unique(v) if i > 0}


def instance_iou_analysis(
    labels_unrect,
    labels_rect,
    labels_gt_warp,
    footprints,
    flow_ref: FlowField,
    thresholds: Sequence[float] = (0.0,),
) -> IoUAnalysis:
    """Per-instance IoU against footprints before and after rectification.

    Instances are matched by integer id. An instance counts toward the RMS
    curve only if rectifying it with the reference pose reaches IoU 0.9.
    Ids with no footprint are listed in ``skipped``.
    """
    lab = [np.asarray(as_raster(x).band(), dtype=np.float64) for x in (labels_unrect, labels_rect, labels_gt_warp, footprints)]
    unrect, rect, gt_warp, fp = lab
    if not all(x.shape == fp.shape for x in lab):
        raise InvalidArgumentError("label rasters differ in size")
    mags = flow_ref.magnitudes.band()

    fp_ids = _ids(fp)
    seen = _ids(unrect) | _ids(rect) | _ids(gt_warp)
    skipped = sorted(seen - fp_ids)
    records = []
    for i in sorted(fp_ids):
        foot = fp == i
        in_unrect = unrect == i
        m = mags[in_unrect & ~np.isnan(mags)]
        records.append(
            InstanceIoURecord(
                instance_id=i,
                iou_unrectified=iou(in_unrect, foot),
                iou_rectified=iou(rect == i, foot),
                max_magnitude=float(m.max()) if m.size else 0.0,
                included=iou(gt_warp == i, foot) >= INCLUSION_IOU,
            )
        )
    curve = []
    for t in thresholds:
        vals = [r.iou_rectified for r in records if r.included and r.max_magnitude >= t]
        curve.append((float(t), math.sqrt(float(np.mean(np.square(vals)))) if vals else float("nan")))
    return IoUAnalysis(records, curve, skipped)
