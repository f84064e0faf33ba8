"""Seeded synthetic multi-robot scenes with known ground truth.

Scenes act as oracles for round-trip, association and evaluation tests, so
controllability beats realism: a fixed trunk-rooted template pose gets a
random rotation, scale and per-keypoint jitter, and instances are rejection
sampled until every pair of cross-instance keypoints (any part against any
part) is at least min_separation apart and all keypoints sit at least
3*sigma inside the canvas.  Keeping whole instances apart, rather than just
matching parts, is what makes decoded groupings unambiguous enough to serve
as an oracle.

Randomness comes from numpy's Philox generator, a documented 64-bit
counter-based PRNG with a fixed stream order, so identical configs yield
byte-identical scenes on every platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset_io import AnnotationSet, ImageInfo
from .errors import PlacementFailure
from .types import Keypoint, LossMask, PoseInstance, SkeletonSpec

# Template offsets relative to the trunk, in units of robot half-height.
TEMPLATE_OFFSETS = {
    "head": (0.0, -1.0),
    "trunk": (0.0, 0.0),
    "left_hand": (-0.7, -0.15),
    "right_hand": (0.7, -0.15),
    "left_foot": (-0.4, 1.0),
    "right_foot": (0.4, 1.0),
}

MAX_ROTATION = 0.4  # radians
JITTER_FRACTION = 0.05  # of half-height, per keypoint
RETRIES_PER_INSTANCE = 500


@dataclass(frozen=True)
class SceneConfig:
    seed: int
    num_instances: int
    canvas_width: int
    canvas_height: int
    min_separation: float = 12.0
    scale_min: float = 8.0
    scale_max: float = 14.0
    perturbation: float = 0.0
    sigma_margin: float = 2.0  # sigma used for the 3*sigma border margin

    def __post_init__(self):
        if self.min_separation < 0:
            raise ValueError("min_separation must be >= 0")
        if self.scale_min <= 0 or self.scale_max < self.scale_min:
            raise ValueError("scale range must satisfy 0 < min <= max")


def _template(spec: SkeletonSpec) -> np.ndarray:
    """Per-part unit offsets; falls back to a radial layout for skeletons
    whose keypoint names are not the default six."""
    if all(name in TEMPLATE_OFFSETS for name in spec.keypoint_names):
        return np.array([TEMPLATE_OFFSETS[n] for n in spec.keypoint_names])
    degree = np.zeros(spec.num_keypoints, dtype=int)
    for a, b in spec.limbs:
        degree[a] += 1
        degree[b] += 1
    root = int(np.argmax(degree))
    offsets = []
    for i in range(spec.num_keypoints):
        if i == root:
            offsets.append((0.0, 0.0))
        else:
            ang = 2.0 * math.pi * i / spec.num_keypoints
            offsets.append((math.cos(ang), math.sin(ang)))
    return np.array(offsets)


def generate_scene(config: SceneConfig, spec: SkeletonSpec) -> list[PoseInstance]:
    """Deterministic function of (config, spec); raises PlacementFailure when
    the rejection sampler exhausts its retry budget."""
    rng = np.random.Generator(np.random.Philox(key=config.seed))
    template = _template(spec)
    margin = 3.0 * config.sigma_margin
    w, h = config.canvas_width, config.canvas_height

    placed: list[np.ndarray] = []  # (P, 2) arrays
    instances: list[PoseInstance] = []
    min_sep2 = config.min_separation**2

    for _ in range(config.num_instances):
        for attempt in range(RETRIES_PER_INSTANCE):
            half = rng.uniform(config.scale_min, config.scale_max)
            rot = rng.uniform(-MAX_ROTATION, MAX_ROTATION)
            cx = rng.uniform(margin, w - 1 - margin)
            cy = rng.uniform(margin, h - 1 - margin)
            jitter = rng.normal(0.0, JITTER_FRACTION * half, size=template.shape)
            cos_r, sin_r = math.cos(rot), math.sin(rot)
            base = template * half + jitter
            xs = cx + base[:, 0] * cos_r - base[:, 1] * sin_r
            ys = cy + base[:, 0] * sin_r + base[:, 1] * cos_r
            pts = np.stack([xs, ys], axis=1)
            if (
                (xs < margin).any()
                or (xs > w - 1 - margin).any()
                or (ys < margin).any()
                or (ys > h - 1 - margin).any()
            ):
                continue
            if any(
                (((pts[:, None, :] - prev[None, :, :]) ** 2).sum(axis=2) < min_sep2).any()
                for prev in placed
            ):
                continue
            placed.append(pts)
            instances.append(
                PoseInstance(
                    [Keypoint(float(x), float(y), 2, 1.0) for x, y in pts],
                    instance_score=1.0,
                )
            )
            break
        else:
            raise PlacementFailure(
                f"could not place instance {len(instances) + 1}/{config.num_instances} "
                f"on a {w}x{h} canvas at separation {config.min_separation}"
            )
    return instances


def perturb(
    instances: list[PoseInstance],
    std: float,
    drop_rate: float,
    seed: int,
) -> list[PoseInstance]:
    """Simulated detections: Gaussian displacement per visible keypoint plus
    independent keypoint dropping; instances left with no visible keypoint
    are filtered out. instance_score decays with mean squared displacement
    so score ranking correlates with detection quality."""
    if std < 0:
        raise ValueError("std must be >= 0")
    if not (0.0 <= drop_rate <= 1.0):
        raise ValueError("drop_rate must be in [0, 1]")
    rng = np.random.Generator(np.random.Philox(key=seed))
    out: list[PoseInstance] = []
    for inst in instances:
        kps: list[Keypoint] = []
        disp2: list[float] = []
        for k in inst.keypoints:
            if k.v <= 0:
                kps.append(k)
                continue
            dx, dy = rng.normal(0.0, std, size=2) if std > 0 else (0.0, 0.0)
            dropped = rng.random() < drop_rate
            if dropped:
                kps.append(Keypoint(0.0, 0.0, 0, 0.0))
            else:
                kps.append(Keypoint(k.x + dx, k.y + dy, k.v, k.score))
                disp2.append(dx * dx + dy * dy)
        if not any(k.v > 0 for k in kps):
            continue
        mean_d2 = float(np.mean(disp2)) if disp2 else 0.0
        score = math.exp(-mean_d2 / (2.0 * std * std + 1e-9))
        out.append(PoseInstance(kps, instance_score=score))
    return out


def scenes_to_annotations(
    scenes: list[list[PoseInstance]],
    width: int,
    height: int,
    spec: SkeletonSpec,
) -> AnnotationSet:
    """Wrap generated scenes as an AnnotationSet (one synthetic image each),
    closing the loop synth -> encode -> decode -> evaluate."""
    images = [
        ImageInfo(id=i + 1, file_name=f"synthetic_{i + 1:05d}.png", width=width, height=height)
        for i in range(len(scenes))
    ]
    instances = {i + 1: list(scene) for i, scene in enumerate(scenes)}
    masks: dict[int, LossMask] = {}
    return AnnotationSet(images=images, instances=instances, masks=masks, spec=spec)
