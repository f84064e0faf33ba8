import math
import random

import numpy as np
import pytest

from posekit import (
    DecodeParams,
    assemble_poses,
    decode_image,
    default_spec,
    detect_peaks,
    encode_keypoints,
    encode_limbs,
    match_limb,
    score_connection,
)
from posekit.association import ConnectionCandidate
from posekit.errors import InconsistentReference
from posekit.heatmaps import PeakCandidate
from posekit.synthgen import SceneConfig, generate_scene

from conftest import make_pose, match_poses
from oracles import brute_force_matching


def horizontal_limb_map(spec, width=40, height=40):
    pose = make_pose([(5, 10), (15, 10), (1, 1), (1, 1), (1, 1), (1, 1)],
                     visibility=[2, 2, 0, 0, 0, 0])
    return encode_limbs([pose], spec, width, height).values[0]


def test_on_segment_scores_one(spec):
    limb = horizontal_limb_map(spec)
    src = PeakCandidate(1, 5.0, 10.0, 1.0)
    dst = PeakCandidate(0, 15.0, 10.0, 1.0)
    score, valid = score_connection(limb, src, dst, samples=10)
    assert score == pytest.approx(1.0, abs=1e-6)
    assert valid


def test_all_zero_map_invalid(spec):
    limb = np.zeros((40, 40), dtype=np.float32)
    score, valid = score_connection(limb, PeakCandidate(0, 5, 10, 1), PeakCandidate(1, 15, 10, 1))
    assert score == 0.0
    assert not valid


def test_perpendicular_segment_matches_analytic(spec):
    # Segment from (5,10) to (5,30) against the horizontal limb: sample k/9
    # of the way along has distance 20k/9 to the segment, so the analytic
    # expectation is mean(exp(-(20k/9)^2 / (2*(4*sigma)^2))).
    limb = horizontal_limb_map(spec)
    src = PeakCandidate(1, 5.0, 10.0, 1.0)
    dst = PeakCandidate(0, 5.0, 30.0, 1.0)
    expected = np.mean([math.exp(-((20 * k / 9) ** 2) / (2 * (4 * spec.sigma) ** 2)) for k in range(10)])
    score, _ = score_connection(limb, src, dst, samples=10)
    assert score == pytest.approx(expected, abs=0.02)
    assert score < 0.5
    _, valid_strict = score_connection(limb, src, dst, samples=10, score_floor=0.5)
    assert not valid_strict


def test_degenerate_segment_scores_single_point(spec):
    limb = horizontal_limb_map(spec)
    p = PeakCandidate(1, 10.0, 10.0, 1.0)
    score, valid = score_connection(limb, p, p, samples=10)
    assert score == pytest.approx(1.0, abs=1e-6)
    assert valid


def test_match_limb_single_pair(spec):
    limb = horizontal_limb_map(spec)
    src = [PeakCandidate(1, 5.0, 10.0, 1.0)]
    dst = [PeakCandidate(0, 15.0, 10.0, 1.0)]
    conns = match_limb(src, dst, limb)
    assert len(conns) == 1
    assert conns[0].src is src[0] and conns[0].dst is dst[0]


def test_match_limb_empty_side(spec):
    limb = horizontal_limb_map(spec)
    src = [PeakCandidate(1, 5.0, 10.0, 1.0), PeakCandidate(1, 5.0, 30.0, 1.0)]
    assert match_limb(src, [], limb) == []


def test_match_limb_two_parallel_limbs_agrees_with_brute_force(spec):
    poses = [
        make_pose([(5, 10), (25, 10), (1, 1), (1, 1), (1, 1), (1, 1)], visibility=[2, 2, 0, 0, 0, 0]),
        make_pose([(5, 30), (25, 30), (1, 1), (1, 1), (1, 1), (1, 1)], visibility=[2, 2, 0, 0, 0, 0]),
    ]
    limb = encode_limbs(poses, spec, 40, 40).values[0]
    src = [PeakCandidate(1, 5.0, 10.0, 1.0), PeakCandidate(1, 5.0, 30.0, 1.0)]
    dst = [PeakCandidate(0, 25.0, 10.0, 1.0), PeakCandidate(0, 25.0, 30.0, 1.0)]
    conns = match_limb(src, dst, limb)
    chosen = {(src.index(c.src), dst.index(c.dst)) for c in conns}

    params = DecodeParams()
    scores = np.zeros((2, 2))
    valid = np.zeros((2, 2), dtype=bool)
    for i, s in enumerate(src):
        for j, d in enumerate(dst):
            scores[i, j], valid[i, j] = score_connection(limb, s, d)
    assert chosen == brute_force_matching(scores, valid) == {(0, 0), (1, 1)}
    assert all(c.score >= params.score_floor for c in conns)


def test_assemble_single_robot(spec):
    pose = make_pose([(20, 20), (20, 30), (13, 28), (27, 28), (16, 40), (24, 40)])
    kp = encode_keypoints([pose], spec, 64, 64)
    limb = encode_limbs([pose], spec, 64, 64)
    peaks = detect_peaks(kp, threshold=0.1)
    by_part = {}
    for p in peaks:
        by_part.setdefault(p.part_index, []).append(p)
    conns = [
        match_limb(by_part[a], by_part[b], limb.values[c], limb_index=c)
        for c, (a, b) in enumerate(spec.limbs)
    ]
    poses = assemble_poses(conns, peaks, spec)
    assert len(poses) == 1
    assert len(poses[0].visible_indices()) == 6


def test_assemble_zero_peaks(spec):
    assert assemble_poses([[] for _ in spec.limbs], [], spec) == []


def test_assemble_rejects_unknown_peak(spec):
    known = PeakCandidate(1, 5.0, 10.0, 1.0)
    stranger = PeakCandidate(0, 15.0, 10.0, 1.0)
    conn = ConnectionCandidate(0, known, stranger, 0.9)
    with pytest.raises(InconsistentReference):
        assemble_poses([[conn]], [known], spec)


def test_keep_singletons_flag(spec):
    lone = PeakCandidate(0, 5.0, 5.0, 0.8)
    assert assemble_poses([[] for _ in spec.limbs], [lone], spec) == []
    kept = assemble_poses([[] for _ in spec.limbs], [lone], spec, keep_singletons=True)
    assert len(kept) == 1
    assert kept[0].visible_indices() == [0]
    assert kept[0].instance_score == pytest.approx(0.8)


def test_instance_score_is_mean_of_members(spec):
    pose = make_pose([(20, 20), (20, 30), (13, 28), (27, 28), (16, 40), (24, 40)])
    kp = encode_keypoints([pose], spec, 64, 64)
    limb = encode_limbs([pose], spec, 64, 64)
    decoded = decode_image(kp, limb, spec)
    assert len(decoded) == 1
    peaks = detect_peaks(kp, threshold=0.1)
    by_part = {}
    for p in peaks:
        by_part.setdefault(p.part_index, []).append(p)
    conn_scores = [
        match_limb(by_part[a], by_part[b], limb.values[c], limb_index=c)[0].score
        for c, (a, b) in enumerate(spec.limbs)
    ]
    expected = np.mean([p.score for p in peaks] + conn_scores)
    assert decoded[0].instance_score == pytest.approx(expected, rel=1e-6)


def test_decode_roundtrip_single_instance(spec):
    pose = make_pose([(20, 20), (20, 30), (13, 28), (27, 28), (16, 40), (24, 40)])
    kp = encode_keypoints([pose], spec, 64, 64)
    limb = encode_limbs([pose], spec, 64, 64)
    decoded = decode_image(kp, limb, spec)
    assert len(decoded) == 1
    for tk, dk in zip(pose.keypoints, decoded[0].keypoints):
        assert dk.v > 0
        assert math.hypot(tk.x - dk.x, tk.y - dk.y) <= 0.5


def test_decode_rescales_to_image_coordinates(spec):
    pose = make_pose([(40, 40), (40, 60), (26, 56), (54, 56), (32, 80), (48, 80)])
    kp = encode_keypoints([pose], spec, 48, 48, scale=0.5)
    limb = encode_limbs([pose], spec, 48, 48, scale=0.5)
    decoded = decode_image(kp, limb, spec)
    assert len(decoded) == 1
    for tk, dk in zip(pose.keypoints, decoded[0].keypoints):
        assert math.hypot(tk.x - dk.x, tk.y - dk.y) <= 0.5 / 0.5


def test_decode_empty_stacks(spec):
    kp = encode_keypoints([], spec, 32, 32)
    limb = encode_limbs([], spec, 32, 32)
    assert decode_image(kp, limb, spec) == []


def test_decode_two_robots_no_cross_talk(spec):
    # Wide separation keeps the limb channels of the two robots from
    # overlapping, so every keypoint must land on its own robot.
    scene = generate_scene(
        SceneConfig(
            seed=21, num_instances=2, canvas_width=96, canvas_height=96,
            min_separation=30.0,
        ),
        spec,
    )
    kp = encode_keypoints(scene, spec, 96, 96)
    limb = encode_limbs(scene, spec, 96, 96)
    decoded = decode_image(kp, limb, spec)
    assert len(decoded) == 2
    for truth, det in match_poses(scene, decoded):
        for tk, dk in zip(truth.keypoints, det.keypoints):
            assert math.hypot(tk.x - dk.x, tk.y - dk.y) <= 0.5


def test_assembly_invariant_under_peak_permutation(spec):
    scene = generate_scene(
        SceneConfig(seed=33, num_instances=3, canvas_width=96, canvas_height=96), spec
    )
    kp = encode_keypoints(scene, spec, 96, 96)
    limb = encode_limbs(scene, spec, 96, 96)
    peaks = detect_peaks(kp, threshold=0.1)

    def run(peak_list):
        by_part = {}
        for p in peak_list:
            by_part.setdefault(p.part_index, []).append(p)
        conns = [
            match_limb(by_part.get(a, []), by_part.get(b, []), limb.values[c], limb_index=c)
            for c, (a, b) in enumerate(spec.limbs)
        ]
        return assemble_poses(conns, peak_list, spec)

    baseline = run(list(peaks))
    shuffled = list(peaks)
    random.Random(4).shuffle(shuffled)
    assert run(shuffled) == baseline


def test_no_peak_reuse_across_instances(spec):
    scene = generate_scene(
        SceneConfig(seed=55, num_instances=4, canvas_width=96, canvas_height=96), spec
    )
    kp = encode_keypoints(scene, spec, 96, 96)
    limb = encode_limbs(scene, spec, 96, 96)
    decoded = decode_image(kp, limb, spec)
    seen = set()
    for pose in decoded:
        for i, k in enumerate(pose.keypoints):
            if k.v > 0:
                key = (i, round(k.x, 6), round(k.y, 6))
                assert key not in seen
                seen.add(key)
