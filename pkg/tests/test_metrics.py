"""Accuracy metrics against naive per-pixel re-computations."""

import numpy as np
import numpy.testing as npt
import pytest

from flowcorr.errors import DimensionError, UndefinedMetricError
from flowcorr.flowfield import FlowField, constant_flow
from flowcorr.metrics import (
    MOTION_BINS,
    aepe,
    binned_aepe,
    endpoint_error,
    fl_outlier_rate,
    metric_report,
)


def random_pair(rng, h=6, w=7, magnitude=20.0):
    def field():
        flow = rng.normal(size=(h, w, 2)) * magnitude
        valid = rng.random(size=(h, w)) > 0.25
        return FlowField(flow, valid)

    return field(), field()


def loop_epe(pred, gt):
    h, w = pred.height, pred.width
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            du = pred.flow[y, x, 0] - gt.flow[y, x, 0]
            dv = pred.flow[y, x, 1] - gt.flow[y, x, 1]
            out[y, x] = np.sqrt(du * du + dv * dv)
    return out


def test_endpoint_error_matches_loop():
    rng = np.random.default_rng(0)
    pred, gt = random_pair(rng)
    npt.assert_allclose(endpoint_error(pred, gt), loop_epe(pred, gt), rtol=1e-12)
    with pytest.raises(DimensionError):
        endpoint_error(pred, constant_flow(2, 2))


def test_aepe_matches_loop():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pred, gt = random_pair(rng)
        total, count = 0.0, 0
        epe = loop_epe(pred, gt)
        for y in range(pred.height):
            for x in range(pred.width):
                if pred.valid[y, x] and gt.valid[y, x]:
                    total += epe[y, x]
                    count += 1
        if count == 0:
            with pytest.raises(UndefinedMetricError):
                aepe(pred, gt)
        else:
            npt.assert_allclose(aepe(pred, gt), total / count, rtol=1e-12)


def test_aepe_ignores_invalid_pixels():
    pred = FlowField(np.zeros((2, 2, 2)), np.array([[True, False], [True, True]]))
    gt_flow = np.zeros((2, 2, 2))
    gt_flow[0, 1] = [100.0, 100.0]  # hidden behind pred's mask
    gt = FlowField(gt_flow, np.ones((2, 2), dtype=bool))
    assert aepe(pred, gt) == 0.0


def test_fl_outlier_rate_matches_loop():
    rng = np.random.default_rng(2)
    for _ in range(20):
        pred, gt = random_pair(rng, magnitude=30.0)
        flags, count = 0, 0
        epe = loop_epe(pred, gt)
        for y in range(pred.height):
            for x in range(pred.width):
                if not (pred.valid[y, x] and gt.valid[y, x]):
                    continue
                count += 1
                mag = np.sqrt(gt.flow[y, x, 0] ** 2 + gt.flow[y, x, 1] ** 2)
                if epe[y, x] > 3.0 and epe[y, x] > 0.05 * mag:
                    flags += 1
        if count:
            npt.assert_allclose(fl_outlier_rate(pred, gt), flags / count, rtol=1e-12)


def test_fl_outlier_requires_both_conditions():
    # EPE 4 on a 100 px reference motion: above the absolute gate but below
    # 5% of the magnitude, so it is NOT an outlier.
    gt = constant_flow(1, 1, u=100.0, v=0.0)
    pred = constant_flow(1, 1, u=96.0, v=0.0)
    assert fl_outlier_rate(pred, gt) == 0.0

    # EPE 4 on a 10 px motion trips both gates.
    gt = constant_flow(1, 1, u=10.0, v=0.0)
    pred = constant_flow(1, 1, u=6.0, v=0.0)
    assert fl_outlier_rate(pred, gt) == 1.0

    # EPE 2 never counts, whatever the magnitude.
    gt = constant_flow(1, 1, u=1.0, v=0.0)
    pred = constant_flow(1, 1, u=3.0, v=0.0)
    assert fl_outlier_rate(pred, gt) == 0.0


def test_fl_region_mask():
    pred = FlowField(np.zeros((2, 2, 2)), np.ones((2, 2), dtype=bool))
    gt_flow = np.zeros((2, 2, 2))
    gt_flow[0, 0] = [10.0, 0.0]  # epe 10 > 3 and > 0.5
    gt = FlowField(gt_flow, np.ones((2, 2), dtype=bool))
    region = np.array([[True, False], [False, False]])
    assert fl_outlier_rate(pred, gt, region=region) == 1.0
    assert fl_outlier_rate(pred, gt, region=~region) == 0.0
    with pytest.raises(DimensionError):
        fl_outlier_rate(pred, gt, region=np.ones((3, 3), dtype=bool))
    with pytest.raises(UndefinedMetricError):
        fl_outlier_rate(pred, gt, region=np.zeros((2, 2), dtype=bool))


def test_binned_aepe_matches_loop():
    rng = np.random.default_rng(3)
    pred, gt = random_pair(rng, h=8, w=8, magnitude=15.0)
    got = binned_aepe(pred, gt)
    epe = loop_epe(pred, gt)
    for label, lo, hi, lo_in, hi_in in MOTION_BINS:
        total, count = 0.0, 0
        for y in range(8):
            for x in range(8):
                if not (pred.valid[y, x] and gt.valid[y, x]):
                    continue
                mag = np.sqrt((gt.flow[y, x] ** 2).sum())
                above = mag >= lo if lo_in else mag > lo
                below = mag <= hi if hi_in else mag < hi
                if above and below:
                    total += epe[y, x]
                    count += 1
        assert got[label]["count"] == count
        if count:
            npt.assert_allclose(got[label]["aepe"], total / count, rtol=1e-12)
        else:
            assert "aepe" not in got[label]
    assert got["All"]["count"] == sum(got[l]["count"] for l, *_ in MOTION_BINS)


def test_binned_aepe_boundary_magnitudes():
    # One pixel per boundary magnitude; the bracket conventions are pinned.
    mags = [0.5, 1.0, 10.0, 10.0001, 20.0, 30.0, 30.0001]
    flow = np.zeros((1, len(mags), 2))
    flow[0, :, 0] = mags
    gt = FlowField(flow, np.ones((1, len(mags)), dtype=bool))
    pred = FlowField(np.zeros_like(flow), np.ones((1, len(mags)), dtype=bool))
    got = binned_aepe(pred, gt)
    assert got["<1"]["count"] == 1  # 0.5
    assert got["[1,10]"]["count"] == 2  # 1.0 and 10.0
    assert got["(10,20]"]["count"] == 2  # 10.0001 and 20.0
    assert got["(20,30]"]["count"] == 1  # 30.0
    assert got[">30"]["count"] == 1  # 30.0001
    assert got["All"]["count"] == 7


def test_binned_aepe_sparse_population():
    gt = constant_flow(2, 2, u=0.5, v=0.0)
    pred = constant_flow(2, 2, u=0.0, v=0.0)
    got = binned_aepe(pred, gt)
    assert got["<1"]["count"] == 4
    for label in ("[1,10]", "(10,20]", "(20,30]", ">30"):
        assert got[label] == {"count": 0}
    npt.assert_allclose(got["All"]["aepe"], 0.5, rtol=1e-12)


def test_metric_report_bundle():
    rng = np.random.default_rng(4)
    pred, gt = random_pair(rng, magnitude=25.0)
    fg = np.zeros((pred.height, pred.width), dtype=bool)
    fg[:3] = True
    report = metric_report(pred, gt, foreground=fg)
    npt.assert_allclose(report.aepe, aepe(pred, gt), rtol=1e-15)
    npt.assert_allclose(report.fl_all, fl_outlier_rate(pred, gt), rtol=1e-15)
    npt.assert_allclose(report.fl_fg, fl_outlier_rate(pred, gt, region=fg), rtol=1e-15)
    npt.assert_allclose(report.fl_bg, fl_outlier_rate(pred, gt, region=~fg), rtol=1e-15)
    d = report.to_json_dict()
    assert set(d) == {"aepe", "fl_all", "fl_fg", "fl_bg", "binned"}

    # An all-true foreground leaves the background undefined -> None.
    report = metric_report(pred, gt, foreground=np.ones_like(fg))
    assert report.fl_bg is None and report.fl_fg is not None

    report = metric_report(pred, gt)
    assert report.fl_fg is None and report.fl_bg is None


def test_metrics_refuse_empty_joint_region():
    pred = FlowField(np.zeros((2, 2, 2)), np.zeros((2, 2), dtype=bool))
    gt = constant_flow(2, 2)
    for fn in (aepe, fl_outlier_rate, binned_aepe):
        with pytest.raises(UndefinedMetricError):
            fn(pred, gt)
