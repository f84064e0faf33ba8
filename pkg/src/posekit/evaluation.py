"""OKS similarity and the AP/AR metric family over OKS thresholds and
scale buckets.

OKS between a detection and a ground-truth instance is the mean, over the
truth's visible keypoints, of exp(-d_i^2 / (2 a^2 k_i^2)) where d_i is the
displacement, k_i the per-keypoint constant and a the truth's segment area
(min enclosing axis-aligned rectangle of its visible keypoints, floored at
area_floor). Keypoints the detector missed contribute 0 to the numerator
but stay in the denominator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NoVisibleTruth, UnknownImageId
from .types import PoseInstance, SkeletonSpec

OKS_THRESHOLDS = tuple((50 + 5 * i) / 100.0 for i in range(10))
SMALL_MAX_AREA = 32.0 * 32.0
LARGE_MIN_AREA = 96.0 * 96.0
DEFAULT_AREA_FLOOR = 1.0
DEFAULT_MAX_DETECTIONS = 20

SCALE_SMALL = "small"
SCALE_MEDIUM = "medium"
SCALE_LARGE = "large"


def segment_area(instance: PoseInstance) -> float:
    """Area of the minimum axis-aligned rectangle over visible keypoints."""
    xs = [k.x for k in instance.keypoints if k.v > 0]
    ys = [k.y for k in instance.keypoints if k.v > 0]
    if not xs:
        raise NoVisibleTruth("instance has no visible keypoint")
    return (max(xs) - min(xs)) * (max(ys) - min(ys))


def scale_class(area: float) -> str:
    """COCO-style scale bucket: small <= 32^2 < medium < 96^2 <= large."""
    if area <= SMALL_MAX_AREA:
        return SCALE_SMALL
    if area < LARGE_MIN_AREA:
        return SCALE_MEDIUM
    return SCALE_LARGE


def oks(
    detection: PoseInstance,
    truth: PoseInstance,
    spec: SkeletonSpec,
    area_floor: float = DEFAULT_AREA_FLOOR,
) -> float:
    a = max(segment_area(truth), area_floor)
    num = 0.0
    count = 0
    for i, tk in enumerate(truth.keypoints):
        if tk.v <= 0:
            continue
        count += 1
        dk = detection.keypoints[i]
        if dk.v <= 0:
            continue
        d2 = (dk.x - tk.x) ** 2 + (dk.y - tk.y) ** 2
        k = spec.oks_k[i]
        num += np.exp(-d2 / (2.0 * a * a * k * k))
    if count == 0:
        raise NoVisibleTruth("truth instance has no visible keypoint")
    return float(num / count)


@dataclass(frozen=True)
class DetectionFlag:
    """Outcome of matching one detection at one threshold."""

    det_index: int
    score: float
    matched_truth: int | None
    oks_value: float
    true_positive: bool
    ignored: bool


def match_and_score(
    detections: Sequence[PoseInstance],
    truths: Sequence[PoseInstance],
    spec: SkeletonSpec,
    threshold: float,
    bucket: str | None = None,
    area_floor: float = DEFAULT_AREA_FLOOR,
) -> tuple[list[DetectionFlag], int]:
    """Greedy per-image matching; returns detection flags and the active
    truth count.

    Detections in descending score order each claim the unmatched in-bucket
    truth of highest OKS, counting as a true positive only when that OKS
    clears the threshold (below-threshold candidates do not consume truths).
    With a bucket active, a detection whose best truth overall lies outside
    the bucket is ignored rather than counted as a false positive.
    """
    active = [
        j
        for j, t in enumerate(truths)
        if bucket is None or scale_class(segment_area(t)) == bucket
    ]
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].instance_score, i))
    matched: set[int] = set()
    flags: list[DetectionFlag] = []
    for i in order:
        det = detections[i]
        best_j, best_oks = None, -1.0
        for j in active:
            if j in matched:
                continue
            o = oks(det, truths[j], spec, area_floor)
            if o >= threshold and o > best_oks:
                best_j, best_oks = j, o
        if best_j is not None:
            matched.add(best_j)
            flags.append(DetectionFlag(i, det.instance_score, best_j, best_oks, True, False))
            continue
        ignored = False
        if bucket is not None and truths:
            all_oks = [oks(det, t, spec, area_floor) for t in truths]
            nearest = int(np.argmax(all_oks))
            ignored = scale_class(segment_area(truths[nearest])) != bucket
        flags.append(DetectionFlag(i, det.instance_score, None, -1.0, False, ignored))
    return flags, len(active)


@dataclass
class PRCurve:
    threshold: float
    recall: list[float]
    precision: list[float]
    ap: float


@dataclass
class EvalReport:
    ap: float
    ap50: float
    ap75: float
    ap_medium: float
    ap_large: float
    ar: float
    ar50: float
    ar75: float
    ar_medium: float
    ar_large: float
    ap_small: float = 0.0
    ar_small: float = 0.0
    per_threshold: list[PRCurve] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {
            "AP": self.ap,
            "AP50": self.ap50,
            "AP75": self.ap75,
            "AP_medium": self.ap_medium,
            "AP_large": self.ap_large,
            "AR": self.ar,
            "AR50": self.ar50,
            "AR75": self.ar75,
            "AR_medium": self.ar_medium,
            "AR_large": self.ar_large,
            "AP_small": self.ap_small,
            "AR_small": self.ar_small,
        }
        d["per_threshold"] = [
            {
                "threshold": c.threshold,
                "recall": c.recall,
                "precision": c.precision,
                "ap": c.ap,
            }
            for c in self.per_threshold
        ]
        return d

    def table(self) -> str:
        """Fixed-width text table, one-decimal percentages."""
        cols = ["AP", "AP50", "AP75", "AP_M", "AP_L", "AR", "AR50", "AR75", "AR_M", "AR_L"]
        vals = [
            self.ap, self.ap50, self.ap75, self.ap_medium, self.ap_large,
            self.ar, self.ar50, self.ar75, self.ar_medium, self.ar_large,
        ]
        header = " ".join(f"{c:>6s}" for c in cols)
        row = " ".join(f"{100.0 * v:6.1f}" for v in vals)
        return header + "\n" + row


def interpolated_ap(recall: Sequence[float], precision: Sequence[float]) -> float:
    """101-point interpolated AP: mean over r of max precision at recall >= r."""
    if not recall:
        return 0.0
    rec = np.asarray(recall)
    env = np.maximum.accumulate(np.asarray(precision)[::-1])[::-1]
    total = 0.0
    for i in range(101):
        r = i / 100.0
        k = int(np.searchsorted(rec, r, side="left"))
        if k < len(rec):
            total += float(env[k])
    return total / 101.0


def _sweep(
    detections: Mapping[object, Sequence[PoseInstance]],
    truths: Mapping[object, Sequence[PoseInstance]],
    spec: SkeletonSpec,
    threshold: float,
    bucket: str | None,
    max_detections: int,
    area_floor: float,
) -> tuple[PRCurve, float]:
    """One (threshold, bucket) pass: PR curve plus recall at max detections."""
    entries: list[tuple[float, object, int, bool]] = []
    npos = 0
    for image_order, image_id in enumerate(sorted(truths.keys(), key=repr)):
        dets = list(detections.get(image_id, ()))
        dets.sort(key=lambda d: -d.instance_score)
        dets = dets[:max_detections]
        flags, active = match_and_score(
            dets, truths[image_id], spec, threshold, bucket, area_floor
        )
        npos += active
        for rank, f in enumerate(flags):
            if not f.ignored:
                entries.append((f.score, image_order, rank, f.true_positive))
    entries.sort(key=lambda e: (-e[0], e[1], e[2]))
    recall: list[float] = []
    precision: list[float] = []
    tp = fp = 0
    for score, _, _, is_tp in entries:
        if is_tp:
            tp += 1
        else:
            fp += 1
        recall.append(tp / npos if npos else 0.0)
        precision.append(tp / (tp + fp))
    curve = PRCurve(threshold, recall, precision, interpolated_ap(recall, precision) if npos else 0.0)
    final_recall = (tp / npos) if npos else 0.0
    return curve, final_recall


def evaluate(
    detections: Mapping[object, Sequence[PoseInstance]],
    truths: Mapping[object, Sequence[PoseInstance]],
    spec: SkeletonSpec,
    max_detections: int = DEFAULT_MAX_DETECTIONS,
    area_floor: float = DEFAULT_AREA_FLOOR,
) -> EvalReport:
    """Compute the full AP/AR family over the 10 OKS thresholds."""
    for image_id in detections:
        if image_id not in truths:
            raise UnknownImageId(f"results reference unknown image id {image_id!r}")

    curves: dict[str | None, list[PRCurve]] = {}
    recalls: dict[str | None, list[float]] = {}
    for bucket in (None, SCALE_SMALL, SCALE_MEDIUM, SCALE_LARGE):
        curves[bucket] = []
        recalls[bucket] = []
        for t in OKS_THRESHOLDS:
            curve, rec = _sweep(detections, truths, spec, t, bucket, max_detections, area_floor)
            curves[bucket].append(curve)
            recalls[bucket].append(rec)

    def mean_ap(bucket):
        return sum(c.ap for c in curves[bucket]) / len(OKS_THRESHOLDS)

    def mean_ar(bucket):
        return sum(recalls[bucket]) / len(OKS_THRESHOLDS)

    main = curves[None]
    return EvalReport(
        ap=mean_ap(None),
        ap50=main[0].ap,
        ap75=main[5].ap,
        ap_medium=mean_ap(SCALE_MEDIUM),
        ap_large=mean_ap(SCALE_LARGE),
        ar=mean_ar(None),
        ar50=recalls[None][0],
        ar75=recalls[None][5],
        ar_medium=mean_ar(SCALE_MEDIUM),
        ar_large=mean_ar(SCALE_LARGE),
        ap_small=mean_ap(SCALE_SMALL),
        ar_small=mean_ar(SCALE_SMALL),
        per_threshold=main,
    )
