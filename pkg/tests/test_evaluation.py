import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posekit import (
    Keypoint,
    PoseInstance,
    SkeletonSpec,
    default_spec,
    evaluate,
    match_and_score,
    oks,
    scale_class,
    segment_area,
)
from posekit.errors import NoVisibleTruth, UnknownImageId
from posekit.evaluation import OKS_THRESHOLDS, interpolated_ap

from conftest import make_pose
from oracles import naive_evaluate, naive_oks


def spread_pose(x0, y0, span_x, span_y, score=1.0):
    """Six keypoints whose bounding rectangle is span_x * span_y."""
    pts = [
        (x0, y0),
        (x0 + span_x, y0 + span_y),
        (x0 + 0.3 * span_x, y0 + 0.5 * span_y),
        (x0 + 0.7 * span_x, y0 + 0.2 * span_y),
        (x0 + 0.5 * span_x, y0 + 0.9 * span_y),
        (x0 + 0.9 * span_x, y0 + 0.4 * span_y),
    ]
    return make_pose(pts, score=score)


def shift(pose, dx, dy, score=None):
    kps = [
        Keypoint(k.x + dx, k.y + dy, k.v, k.score) if k.v > 0 else k
        for k in pose.keypoints
    ]
    return PoseInstance(kps, pose.instance_score if score is None else score)


# --- segment_area / scale_class ---------------------------------------------

def test_segment_area_rectangle():
    pose = make_pose([(0, 0), (10, 20)], visibility=[2, 2])
    assert segment_area(pose) == 200.0


def test_segment_area_single_visible():
    pose = make_pose([(5, 5), (50, 50)], visibility=[2, 0])
    assert segment_area(pose) == 0.0


def test_segment_area_collinear():
    pose = make_pose([(0, 5), (10, 5)], visibility=[2, 2])
    assert segment_area(pose) == 0.0


def test_segment_area_requires_visible():
    # All-invisible instances cannot be constructed, so force the state.
    bad = PoseInstance([Keypoint(1, 1, 2)])
    bad.keypoints = (Keypoint(1, 1, 0, 0.0),)
    with pytest.raises(NoVisibleTruth):
        segment_area(bad)


def test_scale_class_buckets():
    assert scale_class(50.0**2) == "medium"
    assert scale_class(32.0**2) == "small"
    assert scale_class(96.0**2) == "large"
    assert scale_class(0.0) == "small"


# --- oks ---------------------------------------------------------------------

def test_oks_identity_is_exactly_one(spec):
    truth = spread_pose(10, 10, 50, 50)
    assert oks(truth, truth, spec) == 1.0


def test_oks_uniform_displacement_analytic(spec):
    rng = np.random.default_rng(8)
    for _ in range(100):
        a = float(rng.uniform(5, 400))
        k = float(rng.uniform(0.05, 0.5))
        d = float(rng.uniform(0.0, 1.5)) * a * k
        side = math.sqrt(a)
        truth = make_pose([(0, 0), (side, side)], visibility=[2, 2])
        theta = rng.uniform(0, 2 * math.pi)
        det = shift(truth, d * math.cos(theta), d * math.sin(theta))
        test_spec = SkeletonSpec(("a", "b"), ((0, 1),), oks_k=(k, k))
        dx, dy = d * math.cos(theta), d * math.sin(theta)
        expected = math.exp(-(dx * dx + dy * dy) / (2 * a * a * k * k))
        got = oks(det, truth, test_spec)
        assert got == pytest.approx(expected, rel=1e-12)


def test_oks_missed_keypoint_counts_in_denominator():
    spec2 = SkeletonSpec(("a", "b"), ((0, 1),))
    truth = make_pose([(0, 0), (10, 10)], visibility=[2, 2])
    det = make_pose([(0, 0), (10, 10)], visibility=[2, 0])
    assert oks(det, truth, spec2) == 0.5


def test_oks_translation_invariance(spec):
    truth = spread_pose(10, 10, 40, 60)
    det = shift(truth, 3.0, -2.0)
    base = oks(det, truth, spec)
    moved = oks(shift(det, 17, 5), shift(truth, 17, 5), spec)
    assert moved == pytest.approx(base, rel=1e-12)


def test_oks_matches_naive(spec):
    rng = np.random.default_rng(12)
    for _ in range(20):
        truth = spread_pose(rng.uniform(0, 20), rng.uniform(0, 20), rng.uniform(20, 70), rng.uniform(20, 70))
        det = shift(truth, rng.normal(0, 3), rng.normal(0, 3))
        assert oks(det, truth, spec) == pytest.approx(
            naive_oks(det, truth, spec.oks_k), rel=1e-12
        )


# --- match_and_score ---------------------------------------------------------

def test_match_identity_is_tp(spec):
    truth = spread_pose(10, 10, 50, 50)
    flags, npos = match_and_score([truth], [truth], spec, threshold=0.95)
    assert npos == 1
    assert flags[0].true_positive


def test_no_detections_is_fn(spec):
    truth = spread_pose(10, 10, 50, 50)
    flags, npos = match_and_score([], [truth], spec, threshold=0.5)
    assert flags == [] and npos == 1


def test_greedy_matching_agrees_with_exhaustive_toy(spec):
    truths = [spread_pose(10, 10, 50, 50), spread_pose(200, 10, 50, 50)]
    dets = [
        shift(truths[0], 1, 1, score=0.9),
        shift(truths[1], 2, -1, score=0.8),
        shift(truths[0], 40, 40, score=0.3),
    ]
    for t in OKS_THRESHOLDS:
        flags, _ = match_and_score(dets, truths, spec, threshold=t)
        got = [f.true_positive for f in flags]
        from oracles import _naive_match_image

        naive_flags, _ = _naive_match_image(dets, truths, spec.oks_k, t, None)
        assert got == [f == "tp" for f in naive_flags]


# --- evaluate ----------------------------------------------------------------

def perfect_dataset(spec):
    truths = {
        1: [spread_pose(10, 10, 50, 50), spread_pose(150, 20, 100, 100)],
        2: [spread_pose(30, 30, 60, 40)],
    }
    dets = {k: [shift(p, 0, 0, score=1.0) for p in v] for k, v in truths.items()}
    return dets, truths


def test_perfect_detections_score_one(spec):
    dets, truths = perfect_dataset(spec)
    report = evaluate(dets, truths, spec)
    for name in ("ap", "ap50", "ap75", "ap_medium", "ap_large", "ar", "ar50", "ar75", "ar_medium", "ar_large"):
        assert getattr(report, name) == pytest.approx(1.0), name


def test_empty_detections_score_zero(spec):
    _, truths = perfect_dataset(spec)
    report = evaluate({}, truths, spec)
    assert report.ap == 0.0 and report.ar == 0.0


def test_unknown_image_id_rejected(spec):
    dets, truths = perfect_dataset(spec)
    dets[99] = dets[1]
    with pytest.raises(UnknownImageId):
        evaluate(dets, truths, spec)


def test_evaluate_matches_naive_reference(spec):
    rng = np.random.default_rng(42)
    truths = {}
    dets = {}
    for img in range(4):
        tl = [
            spread_pose(
                rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(35, 70), rng.uniform(35, 70)
            )
            for _ in range(int(rng.integers(1, 4)))
        ]
        dl = []
        for t in tl:
            if rng.random() < 0.85:
                dl.append(shift(t, rng.normal(0, 2), rng.normal(0, 2), score=float(rng.uniform(0.5, 1.0))))
        if rng.random() < 0.5:
            dl.append(shift(tl[0], rng.uniform(20, 40), rng.uniform(20, 40), score=float(rng.uniform(0.05, 0.3))))
        truths[img] = tl
        dets[img] = dl
    report = evaluate(dets, truths, spec)
    ref = naive_evaluate(dets, truths, spec.oks_k)
    assert report.ap == pytest.approx(ref["AP"], abs=1e-9)
    assert report.ar == pytest.approx(ref["AR"], abs=1e-9)
    assert report.ap50 == pytest.approx(ref["AP50"], abs=1e-9)
    assert report.ap75 == pytest.approx(ref["AP75"], abs=1e-9)
    assert report.ap_medium == pytest.approx(ref["AP_medium"], abs=1e-9)
    assert report.ap_large == pytest.approx(ref["AP_large"], abs=1e-9)


def test_ap_monotone_in_threshold(spec):
    rng = np.random.default_rng(77)
    truths = {0: [spread_pose(10, 10, 50, 50), spread_pose(120, 10, 60, 60)]}
    dets = {0: [shift(t, rng.normal(0, 4), rng.normal(0, 4), score=float(rng.uniform(0.4, 1))) for t in truths[0]]}
    report = evaluate(dets, truths, spec)
    aps = [c.ap for c in report.per_threshold]
    assert all(a >= b - 1e-12 for a, b in zip(aps, aps[1:]))


def test_detection_order_invariance(spec):
    dets, truths = perfect_dataset(spec)
    scored = {
        k: [shift(p, i + 1.0, 0.0, score=0.9 - 0.1 * i) for i, p in enumerate(v)]
        for k, v in truths.items()
    }
    fwd = evaluate(scored, truths, spec)
    rev = evaluate({k: list(reversed(v)) for k, v in scored.items()}, truths, spec)
    assert fwd.to_dict() == rev.to_dict()


def test_interpolated_ap_simple_curve():
    # One TP then one FP over a single truth: precision [1, 0.5], recall [1, 1].
    assert interpolated_ap([1.0, 1.0], [1.0, 0.5]) == pytest.approx(1.0)
    # One FP then one TP: the precision envelope is 0.5 over the whole
    # recall grid (max precision among points with recall >= r is 0.5).
    assert interpolated_ap([0.0, 1.0], [0.0, 0.5]) == pytest.approx(0.5)


def test_report_table_format(spec):
    dets, truths = perfect_dataset(spec)
    table = evaluate(dets, truths, spec).table()
    lines = table.splitlines()
    assert lines[0].split() == ["AP", "AP50", "AP75", "AP_M", "AP_L", "AR", "AR50", "AR75", "AR_M", "AR_L"]
    assert lines[1].split() == ["100.0"] * 10


@settings(max_examples=20, deadline=None)
@given(dx=st.floats(-30, 30), dy=st.floats(-30, 30))
def test_oks_joint_translation_property(dx, dy):
    spec = default_spec()
    truth = spread_pose(40, 40, 50, 50)
    det = shift(truth, 2.0, 1.0)
    assert oks(shift(det, dx, dy), shift(truth, dx, dy), spec) == pytest.approx(
        oks(det, truth, spec), rel=1e-9
    )
