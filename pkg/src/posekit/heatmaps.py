"""Heatmap codec: encode keypoints/limbs into Gaussian heatmaps, fuse scales,
and extract peak candidates from keypoint heatmaps.

Encoder conventions:
  * keypoint channel p = per-pixel max over instances of an unnormalized
    Gaussian (std sigma) centered on the instance's visible part p;
  * limb channel c = per-pixel arithmetic mean, over instances with both
    endpoints visible, of a Gaussian (std 4*sigma) of point-to-segment
    distance;
  * Gaussian support is truncated at radius 3*std (values there are below
    1.2e-2 and are written as 0).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyCanvas, MismatchedChannelCounts, PkhmFormatError
from .types import (
    KIND_KEYPOINTS,
    KIND_LIMBS,
    HeatmapStack,
    PoseInstance,
    SkeletonSpec,
)

TRUNCATION_RADII = 3.0  # in units of the channel's Gaussian std


@dataclass(frozen=True)
class PeakCandidate:
    """A local maximum of one keypoint channel, in heatmap coordinates."""

    part_index: int
    x: float
    y: float
    score: float


def _check_canvas(width: int, height: int) -> None:
    if width <= 0 or height <= 0:
        raise EmptyCanvas(f"canvas {width}x{height} is empty")


def encode_keypoints(
    instances: Sequence[PoseInstance],
    spec: SkeletonSpec,
    width: int,
    height: int,
    scale: float = 1.0,
) -> HeatmapStack:
    """Render per-part Gaussian heatmaps, max-fused across instances.

    width/height are heatmap dimensions; instance coordinates are image
    coordinates and are multiplied by `scale` before rendering.
    """
    _check_canvas(width, height)
    sigma = spec.sigma
    radius = TRUNCATION_RADII * sigma
    out = np.zeros((spec.num_keypoints, height, width), dtype=np.float64)

    for inst in instances:
        for p, kp in enumerate(inst.keypoints):
            if kp.v <= 0:
                continue
            cx, cy = kp.x * scale, kp.y * scale
            x0 = max(int(np.floor(cx - radius)), 0)
            x1 = min(int(np.ceil(cx + radius)), width - 1)
            y0 = max(int(np.floor(cy - radius)), 0)
            y1 = min(int(np.ceil(cy + radius)), height - 1)
            if x0 > x1 or y0 > y1:
                continue
            xs = np.arange(x0, x1 + 1, dtype=np.float64)
            ys = np.arange(y0, y1 + 1, dtype=np.float64)
            d2 = (xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2
            g = np.exp(-d2 / (2.0 * sigma * sigma))
            g[d2 > radius * radius] = 0.0
            region = out[p, y0 : y1 + 1, x0 : x1 + 1]
            np.maximum(region, g, out=region)

    return HeatmapStack(out.astype(np.float32), KIND_KEYPOINTS, scale=scale)


def _segment_distance_sq(
    xs: np.ndarray, ys: np.ndarray, a: tuple[float, float], b: tuple[float, float]
) -> np.ndarray:
    """Squared distance from grid points (ys[:,None], xs[None,:]) to segment a-b."""
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    px = xs[None, :] - ax
    py = ys[:, None] - ay
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0.0:
        return px * px + py * py
    t = np.clip((px * dx + py * dy) / seg_len2, 0.0, 1.0)
    ex = px - t * dx
    ey = py - t * dy
    return ex * ex + ey * ey


def encode_limbs(
    instances: Sequence[PoseInstance],
    spec: SkeletonSpec,
    width: int,
    height: int,
    scale: float = 1.0,
) -> HeatmapStack:
    """Render per-limb segment Gaussians, averaged over contributing instances.

    A limb contributes only when both endpoints are visible; the divisor is
    the count of contributing instances for that limb (all-zero channel when
    none contribute).
    """
    _check_canvas(width, height)
    std = 4.0 * spec.sigma
    radius = TRUNCATION_RADII * std
    acc = np.zeros((spec.num_limbs, height, width), dtype=np.float64)
    counts = np.zeros(spec.num_limbs, dtype=np.int64)

    for inst in instances:
        for c, (ia, ib) in enumerate(spec.limbs):
            ka, kb = inst.keypoints[ia], inst.keypoints[ib]
            if ka.v <= 0 or kb.v <= 0:
                continue
            ax, ay = ka.x * scale, ka.y * scale
            bx, by = kb.x * scale, kb.y * scale
            x0 = max(int(np.floor(min(ax, bx) - radius)), 0)
            x1 = min(int(np.ceil(max(ax, bx) + radius)), width - 1)
            y0 = max(int(np.floor(min(ay, by) - radius)), 0)
            y1 = min(int(np.ceil(max(ay, by) + radius)), height - 1)
            counts[c] += 1
            if x0 > x1 or y0 > y1:
                continue
            xs = np.arange(x0, x1 + 1, dtype=np.float64)
            ys = np.arange(y0, y1 + 1, dtype=np.float64)
            d2 = _segment_distance_sq(xs, ys, (ax, ay), (bx, by))
            g = np.exp(-d2 / (2.0 * std * std))
            g[d2 > radius * radius] = 0.0
            acc[c, y0 : y1 + 1, x0 : x1 + 1] += g

    nonzero = counts > 0
    acc[nonzero] /= counts[nonzero, None, None]
    return HeatmapStack(acc.astype(np.float32), KIND_LIMBS, scale=scale)


def bilinear_resize(values: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """Bilinear resize that maps grid corners onto grid corners exactly."""
    in_h, in_w = values.shape
    if (in_h, in_w) == (out_height, out_width):
        return values.astype(np.float64, copy=True)
    v = values.astype(np.float64)
    ys = np.linspace(0.0, in_h - 1, out_height) if out_height > 1 else np.zeros(1)
    xs = np.linspace(0.0, in_w - 1, out_width) if out_width > 1 else np.zeros(1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = v[np.ix_(y0, x0)] * (1 - wx) + v[np.ix_(y0, x1)] * wx
    bot = v[np.ix_(y1, x0)] * (1 - wx) + v[np.ix_(y1, x1)] * wx
    return top * (1 - wy) + bot * wy


def fuse_multiscale(
    stacks: Sequence[HeatmapStack], target_width: int, target_height: int
) -> HeatmapStack:
    """Upsample every stack to the target size, then average element-wise."""
    if not stacks:
        raise MismatchedChannelCounts("no stacks to fuse")
    _check_canvas(target_width, target_height)
    channels = stacks[0].num_channels
    for s in stacks:
        if s.num_channels != channels:
            raise MismatchedChannelCounts(
                f"stacks disagree on channel count: {s.num_channels} vs {channels}"
            )
    acc = np.zeros((channels, target_height, target_width), dtype=np.float64)
    for s in stacks:
        for c in range(channels):
            acc[c] += bilinear_resize(s.values[c], target_height, target_width)
    acc /= len(stacks)
    return HeatmapStack(acc.astype(np.float32), stacks[0].kind, scale=1.0)


_NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


def _quadratic_offset(left: float, center: float, right: float) -> float:
    denom = left + right - 2.0 * center
    if denom >= 0.0:
        return 0.0
    off = (left - right) / (2.0 * denom)
    limit = 0.5 - 1e-6
    return float(np.clip(off, -limit, limit))


def detect_peaks(
    stack: HeatmapStack, threshold: float = 0.1, refine: bool = True
) -> list[PeakCandidate]:
    """3x3 non-maximum suppression over every keypoint channel.

    A pixel survives when its value is >= threshold and >= all 8 neighbors
    (out-of-bounds neighbors count as -inf). On an equal-valued plateau only
    the lexicographically smallest (y, x) pixel survives. Each survivor is
    refined to sub-pixel position by a quadratic fit along x and y, the
    offset clamped to (-0.5, 0.5); set refine=False for integer peaks.
    """
    if not (0.0 <= threshold < 1.0):
        raise ValueError(f"threshold must be in [0, 1), got {threshold}")
    peaks: list[PeakCandidate] = []
    h, w = stack.height, stack.width
    for part in range(stack.num_channels):
        chan = stack.values[part].astype(np.float64)
        padded = np.full((h + 2, w + 2), -np.inf)
        padded[1:-1, 1:-1] = chan
        neigh_max = np.full((h, w), -np.inf)
        for dy, dx in _NEIGHBOR_OFFSETS:
            np.maximum(neigh_max, padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w], out=neigh_max)
        cand = (chan >= neigh_max) & (chan >= threshold)
        ys, xs = np.nonzero(cand)
        if ys.size == 0:
            continue

        # Collapse plateaus: group adjacent candidates of equal value and
        # keep the (y, x)-smallest representative of each group.
        coords = list(zip(ys.tolist(), xs.tolist()))
        index = {c: i for i, c in enumerate(coords)}
        parent = list(range(len(coords)))

        def find(i: int) -> int:
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i, (y, x) in enumerate(coords):
            for dy, dx in _NEIGHBOR_OFFSETS:
                j = index.get((y + dy, x + dx))
                if j is not None and chan[y, x] == chan[y + dy, x + dx]:
                    parent[find(i)] = find(j)
        winners: dict[int, tuple[int, int]] = {}
        for i, c in enumerate(coords):
            r = find(i)
            if r not in winners or c < winners[r]:
                winners[r] = c

        for y, x in sorted(winners.values()):
            px, py = float(x), float(y)
            if refine:
                if 0 < x < w - 1:
                    px += _quadratic_offset(chan[y, x - 1], chan[y, x], chan[y, x + 1])
                if 0 < y < h - 1:
                    py += _quadratic_offset(chan[y - 1, x], chan[y, x], chan[y + 1, x])
            peaks.append(PeakCandidate(part, px, py, float(chan[y, x])))
    return peaks


def sample_bilinear(values: np.ndarray, x: float, y: float) -> float:
    """Bilinearly interpolate a 2D grid at (x, y); coordinates are clamped."""
    h, w = values.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0, y0 = int(x), int(y)
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    top = values[y0, x0] * (1 - fx) + values[y0, x1] * fx
    bot = values[y1, x0] * (1 - fx) + values[y1, x1] * fx
    return float(top * (1 - fy) + bot * fy)


# ---------------------------------------------------------------------------
# PKHM binary container: little-endian header (magic "PKHM", u32 version,
# u32 channels, u32 width, u32 height, u8 kind, f32 scale) followed by
# channel-major float32 row-major data.

PKHM_MAGIC = b"PKHM"
PKHM_VERSION = 1
_PKHM_HEADER = struct.Struct("<4sIIIIBf")
_KIND_CODES = {KIND_KEYPOINTS: 0, KIND_LIMBS: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}


def pkhm_bytes(stack: HeatmapStack) -> bytes:
    header = _PKHM_HEADER.pack(
        PKHM_MAGIC,
        PKHM_VERSION,
        stack.num_channels,
        stack.width,
        stack.height,
        _KIND_CODES[stack.kind],
        stack.scale,
    )
    return header + stack.values.astype("<f4").tobytes()


def write_pkhm(stack: HeatmapStack, path: str | Path) -> None:
    Path(path).write_bytes(pkhm_bytes(stack))


def read_pkhm(path: str | Path) -> HeatmapStack:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise PkhmFormatError(f"cannot read {path}: {e}") from e
    if len(raw) < _PKHM_HEADER.size:
        raise PkhmFormatError(f"{path}: truncated header")
    magic, version, channels, width, height, kind_code, scale = _PKHM_HEADER.unpack_from(raw)
    if magic != PKHM_MAGIC:
        raise PkhmFormatError(f"{path}: bad magic {magic!r}")
    if version != PKHM_VERSION:
        raise PkhmFormatError(f"{path}: unsupported version {version}")
    if kind_code not in _KIND_NAMES:
        raise PkhmFormatError(f"{path}: unknown kind code {kind_code}")
    expected = channels * width * height * 4
    body = raw[_PKHM_HEADER.size :]
    if len(body) != expected:
        raise PkhmFormatError(f"{path}: payload is {len(body)} bytes, expected {expected}")
    values = np.frombuffer(body, dtype="<f4").reshape(channels, height, width)
    return HeatmapStack(values.copy(), _KIND_NAMES[kind_code], scale=float(scale))


def export_png16(stack: HeatmapStack, out_dir: str | Path, prefix: str) -> list[Path]:
    """Write each channel as a lossless 16-bit grayscale PNG for inspection."""
    from PIL import Image

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for c in range(stack.num_channels):
        scaled = np.clip(stack.values[c], 0.0, 1.0) * 65535.0
        img = Image.fromarray(np.round(scaled).astype(np.uint16))
        path = out_dir / f"{prefix}_{stack.kind}_{c:02d}.png"
        img.save(path)
        paths.append(path)
    return paths
