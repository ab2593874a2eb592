"""Axis-aligned 2D pixel boxes: IoU, image clamping, and seeded jitter."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gr3dkit.errors import DegenerateGeometry, EmptyAfterClamp


@dataclass(frozen=True)
class Box2D:
    """Pixel-space rectangle, origin top-left, (x1, y1) <= (x2, y2).

    Coordinates are continuous reals; rounding happens only when boxes are
    rendered to text.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        object.__setattr__(self, "x1", float(self.x1))
        object.__setattr__(self, "y1", float(self.y1))
        object.__setattr__(self, "x2", float(self.x2))
        object.__setattr__(self, "y2", float(self.y2))
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box coordinates must be finite, got {vals}")
        if self.x2 < self.x1 or self.y2 < self.y1:
            raise ValueError(f"box corners out of order: {vals}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class JitterParams:
    """Magnitudes for box augmentation, relative to the box's own size."""

    center_frac: float = 0.1
    size_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.center_frac < 1.0 and 0.0 <= self.size_frac < 1.0):
            raise ValueError("jitter fractions must lie in [0, 1)")


def iou2d(a: Box2D, b: Box2D) -> float:
    """Intersection over union of two boxes.

    Raises DegenerateGeometry when both boxes have zero area (the union is
    empty and the ratio is undefined).
    """
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = max(0.0, ix) * max(0.0, iy)
    union = a.area + b.area - inter
    if union <= 0.0:
        raise DegenerateGeometry("both boxes have zero area")
    return inter / union


def iou2d_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU matrix. Zero-union pairs yield 0 instead of raising."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)), dtype=np.float64)
    a = np.array([b.as_tuple() for b in boxes_a], dtype=np.float64)
    b = np.array([x.as_tuple() for x in boxes_b], dtype=np.float64)
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0.0, None) * np.clip(iy, 0.0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out


def clamp_to_image(b: Box2D, width: float, height: float) -> Box2D:
    """Intersect a box with [0, width] x [0, height]."""
    x1 = max(b.x1, 0.0)
    y1 = max(b.y1, 0.0)
    x2 = min(b.x2, float(width))
    y2 = min(b.y2, float(height))
    if x1 > x2 or y1 > y2:
        raise EmptyAfterClamp(f"box {b.as_tuple()} lies outside {width}x{height}")
    return Box2D(x1, y1, x2, y2)


def _clamp_axis(lo: float, hi: float, extent: float) -> tuple[float, float]:
    # Empty overlap snaps to a one-pixel sliver at the nearest image edge.
    if hi < 0.0:
        return 0.0, min(1.0, extent)
    if lo > extent:
        return max(0.0, extent - 1.0), extent
    return max(lo, 0.0), min(hi, extent)


def jitter(b: Box2D, p: JitterParams, image_w: float, image_h: float) -> Box2D:
    """Shift and rescale a box by uniform draws, clamped to the image.

    The center moves by +-center_frac of the box size per axis and each side
    is scaled by a factor in [1 - size_frac, 1 + size_frac]; all four draws
    come from a generator seeded with ``p.seed``, so the result is a pure
    function of its arguments.
    """
    rng = np.random.default_rng(p.seed & 0xFFFFFFFFFFFFFFFF)
    bw = b.width
    bh = b.height
    dx = rng.uniform(-p.center_frac * bw, p.center_frac * bw)
    dy = rng.uniform(-p.center_frac * bh, p.center_frac * bh)
    sx = rng.uniform(1.0 - p.size_frac, 1.0 + p.size_frac)
    sy = rng.uniform(1.0 - p.size_frac, 1.0 + p.size_frac)
    # Formulated as offsets from the original corners so that zero draws
    # reproduce the input bitwise.
    gx = 0.5 * bw * (1.0 - sx)
    gy = 0.5 * bh * (1.0 - sy)
    x1, x2 = _clamp_axis(b.x1 + dx + gx, b.x2 + dx - gx, float(image_w))
    y1, y2 = _clamp_axis(b.y1 + dy + gy, b.y2 + dy - gy, float(image_h))
    return Box2D(x1, y1, x2, y2)
