"""Masked MSE training losses between predicted and ground-truth heatmaps.

Keypoint heatmaps are supervised at two scales and normalized by 1/(2P);
limb heatmaps at a single scale, normalized by 1/C. The mask gates each
pixel's squared residual; the sum over pixels carries no pixel-count
normalizer. No gradients here: an external trainer owns backprop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ShapeMismatch
from .heatmaps import bilinear_resize
from .types import HeatmapStack, LossMask


@dataclass(frozen=True)
class LossBreakdown:
    keypoint_loss: float
    limb_loss: float
    total: float


def _masked_sq_error(pred: HeatmapStack, truth: HeatmapStack, mask: LossMask) -> float:
    if pred.values.shape != truth.values.shape:
        raise ShapeMismatch(
            f"pred {pred.values.shape} vs truth {truth.values.shape}"
        )
    if (mask.height, mask.width) != (pred.height, pred.width):
        raise ShapeMismatch(
            f"mask {mask.height}x{mask.width} vs heatmaps {pred.height}x{pred.width}"
        )
    diff = pred.values.astype(np.float64) - truth.values.astype(np.float64)
    gated = diff * diff * mask.values
    # Fixed channel-then-row order keeps the sum bit-identical across runs.
    return float(sum(float(gated[c].sum()) for c in range(gated.shape[0])))


def keypoint_loss(
    preds: Sequence[HeatmapStack],
    truths: Sequence[HeatmapStack],
    masks: Sequence[LossMask],
) -> float:
    """(1/(2P)) * sum over scales, channels and masked pixels of squared error."""
    if not (len(preds) == len(truths) == len(masks)) or not preds:
        raise ShapeMismatch("need one (pred, truth, mask) triple per scale")
    p = preds[0].num_channels
    for s in list(preds) + list(truths):
        if s.num_channels != p:
            raise ShapeMismatch("keypoint stacks disagree on channel count")
    total = 0.0
    for pred, truth, mask in zip(preds, truths, masks):
        total += _masked_sq_error(pred, truth, mask)
    return total / (2.0 * p)


def limb_loss(pred: HeatmapStack, truth: HeatmapStack, mask: LossMask) -> float:
    """(1/C) * sum over channels and masked pixels of squared error."""
    if pred.num_channels != truth.num_channels:
        raise ShapeMismatch("limb stacks disagree on channel count")
    return _masked_sq_error(pred, truth, mask) / pred.num_channels


def total_loss(
    kp_preds: Sequence[HeatmapStack],
    kp_truths: Sequence[HeatmapStack],
    kp_masks: Sequence[LossMask],
    limb_pred: HeatmapStack,
    limb_truth: HeatmapStack,
    limb_mask: LossMask,
) -> LossBreakdown:
    kl = keypoint_loss(kp_preds, kp_truths, kp_masks)
    ll = limb_loss(limb_pred, limb_truth, limb_mask)
    return LossBreakdown(kl, ll, kl + ll)


def resize_mask(mask: LossMask, width: int, height: int) -> LossMask:
    """Downsample an image-resolution mask bilinearly, re-binarized at 0.5."""
    resized = bilinear_resize(mask.values.astype(np.float64), height, width)
    return LossMask((resized >= 0.5).astype(np.uint8))
