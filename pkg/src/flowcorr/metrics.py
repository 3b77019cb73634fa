"""Flow-accuracy metrics: endpoint error, outlier rates, motion-range bins.

All metrics restrict themselves to pixels valid in BOTH fields being
compared; asking for a metric over an empty pixel set raises
UndefinedMetricError rather than returning a made-up number.

The outlier predicate follows the stricter two-condition convention: a pixel
counts as an outlier only when its endpoint error exceeds 3 pixels AND
exceeds 5% of the reference vector's length. Binned reporting groups pixels
by reference motion magnitude into <1, [1,10], (10,20], (20,30] and >30
pixels, plus an "All" bucket.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UndefinedMetricError
from .flowfield import FlowField

OUTLIER_EPE_PX = 3.0
OUTLIER_EPE_FRACTION = 0.05

# (label, lower, upper, lower_inclusive, upper_inclusive) over |reference|.
MOTION_BINS = (
    ("<1", 0.0, 1.0, True, False),
    ("[1,10]", 1.0, 10.0, True, True),
    ("(10,20]", 10.0, 20.0, False, True),
    ("(20,30]", 20.0, 30.0, False, True),
    (">30", 30.0, float("inf"), False, False),
)


def _joint_region(pred: FlowField, gt: FlowField, extra=None) -> np.ndarray:
    if pred.flow.shape != gt.flow.shape:
        raise DimensionError(
            f"field shapes differ: {pred.flow.shape} vs {gt.flow.shape}"
        )
    joint = pred.valid & gt.valid
    if extra is not None:
        extra = np.ascontiguousarray(extra, dtype=bool)
        if extra.shape != joint.shape:
            raise DimensionError(
                f"region mask shape {extra.shape} does not match fields {joint.shape}"
            )
        joint = joint & extra
    return joint


def endpoint_error(pred: FlowField, gt: FlowField) -> np.ndarray:
    """Per-pixel Euclidean distance between the two fields, shape (H, W).

    Computed everywhere; only entries inside the joint valid region are
    meaningful to aggregate.
    """
    if pred.flow.shape != gt.flow.shape:
        raise DimensionError(
            f"field shapes differ: {pred.flow.shape} vs {gt.flow.shape}"
        )
    return np.sqrt(np.sum((pred.flow - gt.flow) ** 2, axis=2))


def aepe(pred: FlowField, gt: FlowField) -> float:
    """Average endpoint error over the jointly valid pixels."""
    joint = _joint_region(pred, gt)
    if not joint.any():
        raise UndefinedMetricError("no jointly valid pixels to average over")
    return float(np.mean(endpoint_error(pred, gt)[joint]))


def fl_outlier_rate(pred: FlowField, gt: FlowField, region=None) -> float:
    """Fraction of outlier pixels, optionally within a region mask.

    A pixel is an outlier when its endpoint error is above 3 px and also
    above 5% of the reference magnitude at that pixel.
    """
    joint = _joint_region(pred, gt, extra=region)
    if not joint.any():
        raise UndefinedMetricError("no jointly valid pixels in the requested region")
    epe = endpoint_error(pred, gt)[joint]
    mag = gt.magnitude()[joint]
    outliers = (epe > OUTLIER_EPE_PX) & (epe > OUTLIER_EPE_FRACTION * mag)
    return float(np.mean(outliers))


def binned_aepe(pred: FlowField, gt: FlowField) -> dict[str, dict]:
    """Endpoint error split by reference-motion magnitude.

    Returns {label: {"aepe": float, "count": int}} for each motion bin plus
    "All"; a bin with no pixels reports {"count": 0} and omits "aepe".
    """
    joint = _joint_region(pred, gt)
    if not joint.any():
        raise UndefinedMetricError("no jointly valid pixels to bin")
    epe = endpoint_error(pred, gt)[joint]
    mag = gt.magnitude()[joint]
    out: dict[str, dict] = {}
    for label, lo, hi, lo_in, hi_in in MOTION_BINS:
        above = mag >= lo if lo_in else mag > lo
        below = mag <= hi if hi_in else mag < hi
        sel = above & below
        n = int(np.count_nonzero(sel))
        if n:
            out[label] = {"aepe": float(np.mean(epe[sel])), "count": n}
        else:
            out[label] = {"count": 0}
    out["All"] = {"aepe": float(np.mean(epe)), "count": int(epe.size)}
    return out


@dataclass(frozen=True)
class MetricReport:
    """Bundle of the standard metrics for one prediction/reference pair.

    fl_fg and fl_bg are None when no foreground mask was supplied.
    """

    aepe: float
    fl_all: float
    fl_fg: float | None
    fl_bg: float | None
    binned: dict[str, dict]

    def to_json_dict(self) -> dict:
        return {
            "aepe": self.aepe,
            "fl_all": self.fl_all,
            "fl_fg": self.fl_fg,
            "fl_bg": self.fl_bg,
            "binned": self.binned,
        }


def metric_report(pred: FlowField, gt: FlowField, foreground=None) -> MetricReport:
    """Evaluate all metrics at once.

    With a boolean foreground mask the outlier rate is additionally split
    into foreground and background; a split with no pixels (for example an
    all-true mask's background) is reported as None rather than an error.
    """
    fl_fg = fl_bg = None
    if foreground is not None:
        foreground = np.ascontiguousarray(foreground, dtype=bool)
        try:
            fl_fg = fl_outlier_rate(pred, gt, region=foreground)
        except UndefinedMetricError:
            fl_fg = None
        try:
            fl_bg = fl_outlier_rate(pred, gt, region=~foreground)
        except UndefinedMetricError:
            fl_bg = None
    return MetricReport(
        aepe=aepe(pred, gt),
        fl_all=fl_outlier_rate(pred, gt),
        fl_fg=fl_fg,
        fl_bg=fl_bg,
        binned=binned_aepe(pred, gt),
    )
