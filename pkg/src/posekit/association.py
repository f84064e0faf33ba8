"""Greedy part association: score candidate limb connections on the limb
heatmaps and assemble peaks into pose instances over the skeleton tree.

Because the skeleton is a tree, every limb can be matched independently and
the per-limb matches merged without ever creating a cycle; only tie-breaking
depends on the limb processing order (spec declaration order).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np

from .errors import InconsistentReference, MismatchedChannelCounts
from .heatmaps import PeakCandidate, detect_peaks, sample_bilinear
from .types import Heatmap, HeatmapStack, Keypoint, PoseInstance, SkeletonSpec


@dataclass(frozen=True)
class ConnectionCandidate:
    """A scored src->dst connection hypothesis for one limb channel."""

    limb_index: int
    src: PeakCandidate
    dst: PeakCandidate
    score: float


@dataclass
class DecodeParams:
    """Tunable constants of the decoding pipeline (all runtime parameters)."""

    peak_threshold: float = 0.1
    samples: int = 10
    score_floor: float = 0.05
    sample_floor: float = 0.05
    pass_fraction: float = 0.8
    keep_singletons: bool = False
    refine: bool = True

    @classmethod
    def from_json(cls, text: str) -> "DecodeParams":
        data = json.loads(text)
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def score_connection(
    limb_map: Heatmap | np.ndarray,
    src: PeakCandidate,
    dst: PeakCandidate,
    samples: int = 10,
    score_floor: float = 0.05,
    sample_floor: float = 0.05,
    pass_fraction: float = 0.8,
) -> tuple[float, bool]:
    """Mean of bilinear limb-map samples along the src->dst segment.

    Valid when the mean clears score_floor and at least pass_fraction of the
    samples clear sample_floor. A degenerate (zero-length) segment is scored
    from the single point.
    """
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    values = limb_map.values if isinstance(limb_map, Heatmap) else np.asarray(limb_map)
    if src.x == dst.x and src.y == dst.y:
        sampled = np.array([sample_bilinear(values, src.x, src.y)])
    else:
        ts = np.linspace(0.0, 1.0, samples)
        sampled = np.array(
            [
                sample_bilinear(values, src.x + t * (dst.x - src.x), src.y + t * (dst.y - src.y))
                for t in ts
            ]
        )
    score = float(sampled.mean())
    passing = float(np.mean(sampled >= sample_floor))
    valid = score >= score_floor and passing >= pass_fraction
    return score, valid


def match_limb(
    candidates_src: Sequence[PeakCandidate],
    candidates_dst: Sequence[PeakCandidate],
    limb_map: Heatmap | np.ndarray,
    limb_index: int = 0,
    params: DecodeParams | None = None,
) -> list[ConnectionCandidate]:
    """Greedy bipartite matching of one limb's endpoint candidates.

    All src x dst pairs are scored, invalid pairs discarded, the rest sorted
    by descending score (ties by smaller (src, dst) index), and accepted
    greedily while both endpoints are unused.
    """
    params = params or DecodeParams()
    scored: list[tuple[float, int, int]] = []
    for i, s in enumerate(candidates_src):
        for j, d in enumerate(candidates_dst):
            score, valid = score_connection(
                limb_map,
                s,
                d,
                samples=params.samples,
                score_floor=params.score_floor,
                sample_floor=params.sample_floor,
                pass_fraction=params.pass_fraction,
            )
            if valid:
                scored.append((score, i, j))
    scored.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_src: set[int] = set()
    used_dst: set[int] = set()
    out: list[ConnectionCandidate] = []
    for score, i, j in scored:
        if i in used_src or j in used_dst:
            continue
        used_src.add(i)
        used_dst.add(j)
        out.append(ConnectionCandidate(limb_index, candidates_src[i], candidates_dst[j], score))
    return out


def _canonical_peak_order(peaks: Sequence[PeakCandidate]) -> list[PeakCandidate]:
    return sorted(peaks, key=lambda p: (p.part_index, -p.score, p.y, p.x))


def assemble_poses(
    connections: Sequence[Sequence[ConnectionCandidate]],
    peaks: Sequence[PeakCandidate],
    spec: SkeletonSpec,
    keep_singletons: bool = False,
) -> list[PoseInstance]:
    """Merge per-limb connections into pose instances with union-find.

    Limbs are processed in spec order. A connection merges its endpoints'
    groups unless the two groups already occupy a common part slot, in which
    case it is dropped. Peaks left in singleton groups become one-keypoint
    instances only when keep_singletons is set. instance_score is the mean
    of the member peak scores and member connection scores.
    """
    peaks = _canonical_peak_order(peaks)
    peak_index = {id(p): i for i, p in enumerate(peaks)}
    parent = list(range(len(peaks)))
    # Per root: occupied part -> peak index, plus accepted connection scores.
    parts: list[dict[int, int]] = [{p.part_index: i} for i, p in enumerate(peaks)]
    conn_scores: list[list[float]] = [[] for _ in peaks]

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for limb_conns in connections:
        for conn in limb_conns:
            try:
                a = peak_index[id(conn.src)]
                b = peak_index[id(conn.dst)]
            except KeyError:
                raise InconsistentReference(
                    f"connection for limb {conn.limb_index} cites an unknown peak"
                ) from None
            ra, rb = find(a), find(b)
            if ra == rb:
                conn_scores[ra].append(conn.score)
                continue
            if parts[ra].keys() & parts[rb].keys():
                continue  # both groups already occupy a common part slot
            parent[rb] = ra
            parts[ra].update(parts[rb])
            conn_scores[ra].extend(conn_scores[rb])
            conn_scores[ra].append(conn.score)

    groups: dict[int, dict[int, int]] = {}
    for i in range(len(peaks)):
        r = find(i)
        groups.setdefault(r, parts[r])

    out: list[PoseInstance] = []
    for root in sorted(groups, key=lambda r: min(groups[r].values())):
        members = groups[root]
        if len(members) < 2 and not keep_singletons:
            continue
        scores = [peaks[i].score for i in sorted(members.values())] + conn_scores[root]
        kps = []
        for part in range(spec.num_keypoints):
            if part in members:
                pk = peaks[members[part]]
                kps.append(Keypoint(pk.x, pk.y, 2, pk.score))
            else:
                kps.append(Keypoint(0.0, 0.0, 0, 0.0))
        out.append(PoseInstance(kps, instance_score=float(np.mean(scores))))
    return out


def decode_image(
    kp_stack: HeatmapStack,
    limb_stack: HeatmapStack,
    spec: SkeletonSpec,
    params: DecodeParams | None = None,
) -> list[PoseInstance]:
    """Full decode: peaks -> per-limb matching -> assembly, image coordinates.

    Output coordinates are rescaled from heatmap to image resolution by
    dividing by the stack scale.
    """
    params = params or DecodeParams()
    kp_stack.check_channels(spec.num_keypoints)
    limb_stack.check_channels(spec.num_limbs)
    if (kp_stack.height, kp_stack.width) != (limb_stack.height, limb_stack.width):
        raise MismatchedChannelCounts(
            "keypoint and limb stacks must share resolution: "
            f"{kp_stack.height}x{kp_stack.width} vs {limb_stack.height}x{limb_stack.width}"
        )

    peaks = detect_peaks(kp_stack, threshold=params.peak_threshold, refine=params.refine)
    peaks = _canonical_peak_order(peaks)
    by_part: dict[int, list[PeakCandidate]] = {}
    for p in peaks:
        by_part.setdefault(p.part_index, []).append(p)

    connections = []
    for c, (ia, ib) in enumerate(spec.limbs):
        connections.append(
            match_limb(
                by_part.get(ia, []),
                by_part.get(ib, []),
                limb_stack.values[c],
                limb_index=c,
                params=params,
            )
        )

    poses = assemble_poses(connections, peaks, spec, keep_singletons=params.keep_singletons)
    if kp_stack.scale != 1.0:
        inv = 1.0 / kp_stack.scale
        poses = [
            PoseInstance(
                [
                    Keypoint(k.x * inv, k.y * inv, k.v, k.score) if k.v > 0 else k
                    for k in pose.keypoints
                ],
                pose.instance_score,
            )
            for pose in poses
        ]
    return poses
