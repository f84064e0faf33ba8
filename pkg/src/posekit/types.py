"""Core domain types: skeletons, keypoints, pose instances, heatmaps and masks.

All types are immutable value objects (numpy buffers are treated as frozen
after construction) and can be shared freely between threads.

Coordinate convention: continuous sub-pixel coordinates with the origin at
the top-left corner of pixel (0,0); integer coordinates name pixel centers,
so heatmap cell (i, j) is sampled exactly at (i, j).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadIndex,
    CyclicSkeleton,
    DisconnectedSkeleton,
    EmptyCanvas,
    MismatchedChannelCounts,
    NonPositiveSigma,
    NoVisibleKeypoints,
)

DEFAULT_KEYPOINT_NAMES = (
    "head",
    "trunk",
    "left_hand",
    "right_hand",
    "left_foot",
    "right_foot",
)

# Star rooted at the trunk: trunk-head, trunk-hands, trunk-feet.
DEFAULT_LIMBS = ((1, 0), (1, 2), (1, 3), (1, 4), (1, 5))

DEFAULT_SIGMA = 2.0
DEFAULT_OKS_K = 0.107

KIND_KEYPOINTS = "keypoints"
KIND_LIMBS = "limbs"


@dataclass(frozen=True)
class SkeletonSpec:
    """Pose graph: P named keypoints plus C = P-1 limb edges forming a tree.

    sigma is the Gaussian std-dev used by the heatmap encoder (heatmap
    pixels); oks_k holds one per-keypoint OKS constant.
    """

    keypoint_names: tuple[str, ...]
    limbs: tuple[tuple[int, int], ...]
    sigma: float = DEFAULT_SIGMA
    oks_k: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "keypoint_names", tuple(self.keypoint_names))
        object.__setattr__(
            self, "limbs", tuple((int(a), int(b)) for a, b in self.limbs)
        )
        if not self.oks_k:
            object.__setattr__(
                self, "oks_k", (DEFAULT_OKS_K,) * len(self.keypoint_names)
            )
        else:
            object.__setattr__(self, "oks_k", tuple(float(k) for k in self.oks_k))

    @property
    def num_keypoints(self) -> int:
        return len(self.keypoint_names)

    @property
    def num_limbs(self) -> int:
        return len(self.limbs)


def default_spec(sigma: float = DEFAULT_SIGMA) -> SkeletonSpec:
    """The 6-keypoint / 5-limb skeleton used by the robot pose dataset."""
    return validate_spec(
        SkeletonSpec(DEFAULT_KEYPOINT_NAMES, DEFAULT_LIMBS, sigma=sigma)
    )


def validate_spec(spec: SkeletonSpec) -> SkeletonSpec:
    """Check all SkeletonSpec invariants; return the spec unchanged if valid.

    Raises CyclicSkeleton, DisconnectedSkeleton, BadIndex or NonPositiveSigma.
    """
    p = spec.num_keypoints
    if p < 2:
        raise BadIndex(f"need at least 2 keypoints, got {p}")
    if len(spec.oks_k) != p:
        raise BadIndex(f"oks_k has {len(spec.oks_k)} entries, expected {p}")
    if spec.sigma <= 0:
        raise NonPositiveSigma(f"sigma must be > 0, got {spec.sigma}")
    for k in spec.oks_k:
        if k <= 0:
            raise NonPositiveSigma(f"oks_k entries must be > 0, got {k}")
    for a, b in spec.limbs:
        if not (0 <= a < p and 0 <= b < p):
            raise BadIndex(f"limb ({a},{b}) references a keypoint outside [0,{p})")
        if a == b:
            raise CyclicSkeleton(f"limb ({a},{b}) is a self-loop")

    # Union-find over the edges: a repeated merge means a cycle, more than
    # one final component means a forest.
    parent = list(range(p))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in spec.limbs:
        ra, rb = find(a), find(b)
        if ra == rb:
            raise CyclicSkeleton(f"limb ({a},{b}) closes a cycle")
        parent[ra] = rb

    if len({find(i) for i in range(p)}) != 1:
        raise DisconnectedSkeleton(
            f"{spec.num_limbs} limbs cannot connect {p} keypoints"
        )
    return spec


@dataclass(frozen=True)
class Keypoint:
    """One keypoint: position, visibility flag and detection confidence.

    v follows the 3-value COCO convention {0,1,2}; all logic only tests
    v > 0. When v == 0 the remaining fields carry no meaning.
    """

    x: float
    y: float
    v: int
    score: float = 1.0

    @property
    def visible(self) -> bool:
        return self.v > 0


class PoseInstance:
    """One robot: a fixed-length keypoint list plus an instance confidence."""

    __slots__ = ("keypoints", "instance_score")

    def __init__(self, keypoints: Iterable[Keypoint], instance_score: float = 1.0):
        kps = tuple(keypoints)
        if not any(k.v > 0 for k in kps):
            raise NoVisibleKeypoints("pose instance has no visible keypoint")
        self.keypoints = kps
        self.instance_score = float(instance_score)

    def visible_indices(self) -> list[int]:
        return [i for i, k in enumerate(self.keypoints) if k.v > 0]

    def __eq__(self, other) -> bool:
        # Invisible keypoints compare equal regardless of their x/y/score.
        if not isinstance(other, PoseInstance):
            return NotImplemented
        if self.instance_score != other.instance_score:
            return False
        if len(self.keypoints) != len(other.keypoints):
            return False
        for a, b in zip(self.keypoints, other.keypoints):
            if a.v != b.v:
                return False
            if a.v > 0 and (a.x, a.y, a.score) != (b.x, b.y, b.score):
                return False
        return True

    def __repr__(self) -> str:
        vis = sum(1 for k in self.keypoints if k.v > 0)
        return (
            f"PoseInstance({vis}/{len(self.keypoints)} visible, "
            f"score={self.instance_score:.4f})"
        )


@dataclass(eq=False)
class Heatmap:
    """Dense 2D scalar grid, row-major float32, values >= 0."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2 or self.values.size == 0:
            raise EmptyCanvas(f"heatmap must be 2D and non-empty, got shape {self.values.shape}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(eq=False)
class HeatmapStack:
    """A stack of same-size heatmap channels: one per keypoint or per limb.

    values has shape (channels, height, width); scale is the ratio of
    heatmap resolution to image resolution, in (0, 1].
    """

    values: np.ndarray
    kind: str
    scale: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3 or self.values[0].size == 0:
            raise EmptyCanvas(
                f"stack must be (channels, h, w) and non-empty, got {self.values.shape}"
            )
        if self.kind not in (KIND_KEYPOINTS, KIND_LIMBS):
            raise ValueError(f"unknown stack kind {self.kind!r}")
        if not (0.0 < self.scale <= 1.0):
            raise ValueError(f"scale must be in (0, 1], got {self.scale}")

    @property
    def num_channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def channels(self) -> list[Heatmap]:
        return [Heatmap(v) for v in self.values]

    def check_channels(self, expected: int) -> None:
        if self.num_channels != expected:
            raise MismatchedChannelCounts(
                f"{self.kind} stack has {self.num_channels} channels, expected {expected}"
            )


@dataclass(eq=False)
class LossMask:
    """Binary per-pixel gate for the training losses (1 = supervised)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8)
        if self.values.ndim != 2 or self.values.size == 0:
            raise EmptyCanvas(f"mask must be 2D and non-empty, got {self.values.shape}")
        bad = ~np.isin(self.values, (0, 1))
        if bad.any():
            raise ValueError("mask values must be 0 or 1")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def all_ones(cls, width: int, height: int) -> "LossMask":
        return cls(np.ones((height, width), dtype=np.uint8))
