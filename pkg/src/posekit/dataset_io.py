"""Load/validate the pose dataset, compute dataset statistics, and
read/write detection results.

Annotation files are COCO-keypoint compatible JSON:

    {
      "schema_version": 1,
      "images": [{"id", "file_name", "width", "height"}, ...],
      "annotations": [{"id", "image_id", "category_id",
                       "keypoints": [x1, y1, v1, ..., xP, yP, vP]}, ...],
      "categories": [{"id", "name", "keypoints": [names...],
                      "skeleton": [[i, j], ...]}],          # 1-based pairs
      "posekit": {"sigma": 2.0, "oks_k": [...],             # vendor block
                  "masks": {"<image_id>": "relative/path.png"}}
    }

Loss masks are 0/255 PNG files next to the annotation file; an absent mask
means all-ones. Results files hold a flat list of detections with full
float precision; all writers emit byte-stable output (sorted keys, fixed
indentation, shortest round-trip floats).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BoundsError,
    NoVisibleKeypoints,
    ParseError,
    SchemaError,
    UnknownImageRef,
)
from .evaluation import scale_class, segment_area
from .types import (
    DEFAULT_OKS_K,
    DEFAULT_SIGMA,
    Keypoint,
    LossMask,
    PoseInstance,
    SkeletonSpec,
    validate_spec,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ImageInfo:
    id: int
    file_name: str
    width: int
    height: int


@dataclass
class AnnotationSet:
    images: list[ImageInfo]
    instances: dict[int, list[PoseInstance]]
    masks: dict[int, LossMask]
    spec: SkeletonSpec

    def image_ids(self) -> list[int]:
        return [im.id for im in self.images]


@dataclass
class DatasetStats:
    instance_count_histogram: dict[int, int]
    scale_proportions: dict[str, float]
    pose_scatter: list[tuple[int, float, float]]

    def to_dict(self) -> dict:
        return {
            "instance_count_histogram": {
                str(k): v for k, v in sorted(self.instance_count_histogram.items())
            },
            "scale_proportions": self.scale_proportions,
            "pose_scatter": [list(t) for t in self.pose_scatter],
        }


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise SchemaError(f"{context}: missing field {key!r}")
    return obj[key]


def spec_from_category(category: dict, vendor: dict | None = None) -> SkeletonSpec:
    """Build a SkeletonSpec from a COCO category plus the vendor block."""
    names = _require(category, "keypoints", "category")
    skeleton = _require(category, "skeleton", "category")
    vendor = vendor or {}
    limbs = []
    for pair in skeleton:
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise SchemaError(f"category: bad skeleton edge {pair!r}")
        limbs.append((pair[0] - 1, pair[1] - 1))  # skeleton indices are 1-based
    p = len(names)
    sigma = float(vendor.get("sigma", DEFAULT_SIGMA))
    oks_k = tuple(float(k) for k in vendor.get("oks_k", (DEFAULT_OKS_K,) * p))
    return validate_spec(SkeletonSpec(tuple(names), tuple(limbs), sigma=sigma, oks_k=oks_k))


def _parse_keypoints(flat: Sequence[float], p: int, context: str) -> list[Keypoint]:
    if len(flat) != 3 * p:
        raise SchemaError(f"{context}: keypoint array has {len(flat)} values, expected {3 * p}")
    kps = []
    for i in range(p):
        x, y, v = flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]
        if v not in (0, 1, 2):
            raise SchemaError(f"{context}: visibility flag {v!r} not in {{0,1,2}}")
        if v == 0:
            kps.append(Keypoint(0.0, 0.0, 0, 0.0))
        else:
            kps.append(Keypoint(float(x), float(y), int(v), 1.0))
    return kps


def _load_mask_png(path: Path, width: int, height: int) -> LossMask:
    from PIL import Image

    try:
        img = Image.open(path).convert("L")
    except OSError as e:
        raise ParseError(f"cannot read mask {path}: {e}") from e
    arr = np.asarray(img)
    if arr.shape != (height, width):
        raise SchemaError(
            f"mask {path} is {arr.shape[1]}x{arr.shape[0]}, image is {width}x{height}"
        )
    return LossMask((arr >= 128).astype(np.uint8))


def load_annotations(path: str | Path) -> AnnotationSet:
    """Parse and fully validate an annotation file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")

    images_raw = _require(doc, "images", str(path))
    annotations_raw = _require(doc, "annotations", str(path))
    categories = _require(doc, "categories", str(path))
    if not categories:
        raise SchemaError(f"{path}: categories must not be empty")
    vendor = doc.get("posekit", {})
    spec = spec_from_category(categories[0], vendor)
    p = spec.num_keypoints

    images: list[ImageInfo] = []
    by_id: dict[int, ImageInfo] = {}
    for im in images_raw:
        info = ImageInfo(
            id=int(_require(im, "id", "image")),
            file_name=str(_require(im, "file_name", "image")),
            width=int(_require(im, "width", "image")),
            height=int(_require(im, "height", "image")),
        )
        if info.id in by_id:
            raise SchemaError(f"duplicate image id {info.id}")
        by_id[info.id] = info
        images.append(info)

    instances: dict[int, list[PoseInstance]] = {im.id: [] for im in images}
    for ann in annotations_raw:
        ann_id = ann.get("id", "?")
        image_id = int(_require(ann, "image_id", f"annotation {ann_id}"))
        if image_id not in by_id:
            raise UnknownImageRef(f"annotation {ann_id} references unknown image {image_id}")
        kps = _parse_keypoints(
            _require(ann, "keypoints", f"annotation {ann_id}"), p, f"annotation {ann_id}"
        )
        try:
            inst = PoseInstance(kps, instance_score=1.0)
        except NoVisibleKeypoints:
            raise SchemaError(f"annotation {ann_id}: no visible keypoint") from None
        info = by_id[image_id]
        for k in inst.keypoints:
            if k.v > 0 and not (0 <= k.x < info.width and 0 <= k.y < info.height):
                raise BoundsError(
                    f"annotation {ann_id}: keypoint ({k.x}, {k.y}) outside "
                    f"{info.width}x{info.height} image {image_id}"
                )
        instances[image_id].append(inst)

    masks: dict[int, LossMask] = {}
    for key, rel in vendor.get("masks", {}).items():
        image_id = int(key)
        if image_id not in by_id:
            raise UnknownImageRef(f"mask entry references unknown image {image_id}")
        info = by_id[image_id]
        masks[image_id] = _load_mask_png(path.parent / rel, info.width, info.height)

    return AnnotationSet(images=images, instances=instances, masks=masks, spec=spec)


def _dump_json(doc: dict, path: Path) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_annotations(aset: AnnotationSet, path: str | Path, vendor_extra: dict | None = None) -> None:
    """Serialize an AnnotationSet back to the byte-stable JSON schema
    (masks are not written; pass their relative paths via vendor_extra)."""
    spec = aset.spec
    doc = {
        "schema_version": SCHEMA_VERSION,
        "images": [
            {"id": im.id, "file_name": im.file_name, "width": im.width, "height": im.height}
            for im in aset.images
        ],
        "annotations": [],
        "categories": [
            {
                "id": 1,
                "name": "robot",
                "keypoints": list(spec.keypoint_names),
                "skeleton": [[a + 1, b + 1] for a, b in spec.limbs],
            }
        ],
        "posekit": {
            "sigma": spec.sigma,
            "oks_k": list(spec.oks_k),
            **(vendor_extra or {}),
        },
    }
    ann_id = 1
    for im in aset.images:
        for inst in aset.instances.get(im.id, []):
            flat: list[float] = []
            for k in inst.keypoints:
                if k.v > 0:
                    flat.extend([k.x, k.y, k.v])
                else:
                    flat.extend([0.0, 0.0, 0])
            doc["annotations"].append(
                {"id": ann_id, "image_id": im.id, "category_id": 1, "keypoints": flat}
            )
            ann_id += 1
    _dump_json(doc, Path(path))


def compute_stats(aset: AnnotationSet, reference_part: int = 0) -> DatasetStats:
    """Instance-count histogram, scale-bucket proportions and pose scatter
    (per-part offsets relative to the reference part)."""
    if aset.images and reference_part >= aset.spec.num_keypoints:
        raise SchemaError(f"reference part {reference_part} out of range")
    histogram = Counter(len(aset.instances.get(im.id, [])) for im in aset.images)
    bucket_counts = Counter()
    scatter: list[tuple[int, float, float]] = []
    total = 0
    for im in aset.images:
        for inst in aset.instances.get(im.id, []):
            total += 1
            bucket_counts[scale_class(segment_area(inst))] += 1
            ref = inst.keypoints[reference_part]
            if ref.v <= 0:
                continue
            for p, k in enumerate(inst.keypoints):
                if p != reference_part and k.v > 0:
                    scatter.append((p, k.x - ref.x, k.y - ref.y))
    proportions = {
        name: (bucket_counts.get(name, 0) / total if total else 0.0)
        for name in ("small", "medium", "large")
    }
    return DatasetStats(dict(histogram), proportions, scatter)


def write_results(poses: Mapping[int, Sequence[PoseInstance]], path: str | Path) -> None:
    """Write detections; loads back bit-identically (v=0 slots canonicalized
    to zeros, per-keypoint scores preserved in a parallel array)."""
    results = []
    for image_id in sorted(poses.keys()):
        for inst in poses[image_id]:
            flat: list[float] = []
            kp_scores: list[float] = []
            for k in inst.keypoints:
                if k.v > 0:
                    flat.extend([k.x, k.y, k.v])
                    kp_scores.append(k.score)
                else:
                    flat.extend([0.0, 0.0, 0])
                    kp_scores.append(0.0)
            results.append(
                {
                    "image_id": image_id,
                    "keypoints": flat,
                    "keypoint_scores": kp_scores,
                    "score": inst.instance_score,
                }
            )
    _dump_json({"schema_version": SCHEMA_VERSION, "results": results}, Path(path))


def load_results(path: str | Path) -> dict[int, list[PoseInstance]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict) or "results" not in doc:
        raise SchemaError(f"{path}: missing 'results' field")
    out: dict[int, list[PoseInstance]] = {}
    for i, rec in enumerate(doc["results"]):
        image_id = int(_require(rec, "image_id", f"result {i}"))
        flat = _require(rec, "keypoints", f"result {i}")
        if len(flat) % 3 != 0:
            raise SchemaError(f"result {i}: keypoint array length {len(flat)} not a multiple of 3")
        p = len(flat) // 3
        kp_scores = rec.get("keypoint_scores", [1.0] * p)
        if len(kp_scores) != p:
            raise SchemaError(f"result {i}: keypoint_scores length mismatch")
        kps = []
        for j in range(p):
            x, y, v = flat[3 * j], flat[3 * j + 1], flat[3 * j + 2]
            if v not in (0, 1, 2):
                raise SchemaError(f"result {i}: visibility flag {v!r} not in {{0,1,2}}")
            if v == 0:
                kps.append(Keypoint(0.0, 0.0, 0, 0.0))
            else:
                kps.append(Keypoint(float(x), float(y), int(v), float(kp_scores[j])))
        try:
            inst = PoseInstance(kps, instance_score=float(_require(rec, "score", f"result {i}")))
        except NoVisibleKeypoints:
            raise SchemaError(f"result {i}: no visible keypoint") from None
        out.setdefault(image_id, []).append(inst)
    return out
