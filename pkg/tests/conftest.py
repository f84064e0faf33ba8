import numpy as np
import pytest

from posekit import Keypoint, PoseInstance, default_spec


@pytest.fixture
def spec():
    return default_spec()


def make_pose(points, score=1.0, visibility=None):
    """Build a PoseInstance from (x, y) pairs; visibility defaults to all 2."""
    if visibility is None:
        visibility = [2] * len(points)
    kps = [
        Keypoint(float(x), float(y), v, 1.0 if v > 0 else 0.0)
        for (x, y), v in zip(points, visibility)
    ]
    return PoseInstance(kps, instance_score=score)


def pose_coords(pose):
    return [(k.x, k.y) for k in pose.keypoints if k.v > 0]


def match_poses(truth_list, det_list):
    """Pair each truth with its nearest detection by mean keypoint distance."""
    pairs = []
    used = set()
    for t in truth_list:
        best, best_d = None, np.inf
        for i, d in enumerate(det_list):
            if i in used:
                continue
            dist = np.mean(
                [
                    np.hypot(tk.x - dk.x, tk.y - dk.y)
                    for tk, dk in zip(t.keypoints, d.keypoints)
                    if tk.v > 0 and dk.v > 0
                ]
                or [np.inf]
            )
            if dist < best_d:
                best, best_d = i, dist
        if best is not None:
            used.add(best)
            pairs.append((t, det_list[best]))
    return pairs
