"""Pinhole intrinsics, focal normalization, depth sampling, and view transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gr3dkit.errors import BehindCamera, InvalidDepth, NoValidDepth
from gr3dkit.geom2d import Box2D
from gr3dkit.geom3d import Box3D, RotationMatrix, rotation_to_euler

FOCAL_REFERENCE = 1000.0


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole parameters in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "fx", float(self.fx))
        object.__setattr__(self, "fy", float(self.fy))
        object.__setattr__(self, "cx", float(self.cx))
        object.__setattr__(self, "cy", float(self.cy))
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        if self.fx <= 0.0 or self.fy <= 0.0:
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image dimensions must be positive, got {self.width}x{self.height}")
        if not (0.0 <= self.cx <= self.width and 0.0 <= self.cy <= self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping view coordinates into the reference frame."""

    rotation: RotationMatrix
    translation: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(
            self, "translation", tuple(float(v) for v in self.translation)
        )
        if len(self.translation) != 3:
            raise ValueError("translation must have 3 entries")

    @classmethod
    def identity(cls) -> "Pose":
        return cls(RotationMatrix.identity(), (0.0, 0.0, 0.0))

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self o other)(x) = self(other(x))."""
        r = self.rotation.compose(other.rotation)
        t = self.rotation.apply(other.translation)
        return Pose(r, (t[0] + self.translation[0],
                        t[1] + self.translation[1],
                        t[2] + self.translation[2]))


class DepthMap:
    """Metric depth raster with a per-pixel validity flag.

    Ingested rasters are single-channel 32-bit floats; pixels that are zero,
    negative, NaN or infinite are invalid. An optional explicit mask is
    intersected with that rule, and a metric scale factor converts raw
    values to meters.
    """

    def __init__(self, values, validity=None):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"depth raster must be 2-D, got shape {arr.shape}")
        finite = np.isfinite(arr) & (arr > 0.0)
        if validity is not None:
            mask = np.asarray(validity, dtype=bool)
            if mask.shape != arr.shape:
                raise ValueError("validity mask shape must match the raster")
            finite &= mask
        self.values = arr
        self.validity = finite
        self.height, self.width = arr.shape

    @classmethod
    def from_raster(cls, raster, scale: float = 1.0, mask=None) -> "DepthMap":
        arr = np.asarray(raster, dtype=np.float64) * float(scale)
        return cls(arr, mask)

    def value_at(self, u: int, v: int) -> float:
        return float(self.values[v, u])


def normalize_intrinsics(k: CameraIntrinsics) -> tuple[int, int, float]:
    """Focal normalization: rescale so the focal length becomes 1000 px.

    Returns (new_width, new_height, scale) with scale = 1000 / fx applied to
    both dimensions, rounded half away from zero and floored at one pixel.
    The real-valued scale is returned so callers can keep sub-pixel
    precision.
    """
    scale = FOCAL_REFERENCE / k.fx
    new_w = max(1, int(math.floor(scale * k.width + 0.5)))
    new_h = max(1, int(math.floor(scale * k.height + 0.5)))
    return new_w, new_h, scale


def scaled_intrinsics(k: CameraIntrinsics) -> CameraIntrinsics:
    """Intrinsics after focal normalization; fx is exactly 1000."""
    new_w, new_h, scale = normalize_intrinsics(k)
    return CameraIntrinsics(
        fx=FOCAL_REFERENCE,
        fy=k.fy * scale,
        cx=min(k.cx * scale, float(new_w)),
        cy=min(k.cy * scale, float(new_h)),
        width=new_w,
        height=new_h,
    )


def project(k: CameraIntrinsics, p) -> tuple[float, float]:
    """Pinhole projection of a camera-frame point to pixels."""
    x, y, z = (float(v) for v in p)
    if z <= 0.0:
        raise BehindCamera(f"cannot project point with z = {z}")
    return (k.fx * x / z + k.cx, k.fy * y / z + k.cy)


def backproject(k: CameraIntrinsics, uv, depth: float) -> tuple[float, float, float]:
    """Lift a pixel at a known metric depth into the camera frame."""
    d = float(depth)
    if d <= 0.0:
        raise InvalidDepth(f"depth must be positive, got {d}")
    u, v = (float(c) for c in uv)
    return ((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d)


def _pixel_range(lo: float, hi: float, extent: int) -> tuple[int, int]:
    # Pixels whose centers (i + 0.5) fall inside [lo, hi], clamped to the image.
    first = max(0, int(math.ceil(lo - 0.5)))
    last = min(extent - 1, int(math.floor(hi - 0.5)))
    return first, last


def sample_region_points(
    depth: DepthMap,
    k: CameraIntrinsics,
    region: Box2D,
    n: int,
    seed: int,
) -> list[tuple[float, float, float]]:
    """Backproject up to n valid depth pixels drawn from a region.

    Pixels are drawn uniformly without replacement via a seeded shuffle of
    the region's valid-pixel list (row-major order), so the same seed always
    yields the same points. If fewer than n valid pixels exist, all of them
    are returned. Raises NoValidDepth when the region holds none.
    """
    if n < 0:
        raise ValueError("sample count must be non-negative")
    u0, u1 = _pixel_range(region.x1, region.x2, depth.width)
    v0, v1 = _pixel_range(region.y1, region.y2, depth.height)
    if u0 > u1 or v0 > v1:
        raise NoValidDepth("region covers no pixel centers")
    window = depth.validity[v0:v1 + 1, u0:u1 + 1]
    vs, us = np.nonzero(window)
    if vs.size == 0:
        raise NoValidDepth("region has no valid depth pixels")
    rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
    order = rng.permutation(vs.size)[:n]
    points = []
    for idx in order:
        v = int(vs[idx]) + v0
        u = int(us[idx]) + u0
        d = float(depth.values[v, u])
        points.append(backproject(k, (u + 0.5, v + 0.5), d))
    return points


def transform_to_reference(pose: Pose, b: Box3D) -> Box3D:
    """Express a box given in a view's camera frame in the reference frame."""
    center = pose.rotation.apply(b.center)
    center = (
        center[0] + pose.translation[0],
        center[1] + pose.translation[1],
        center[2] + pose.translation[2],
    )
    rot = pose.rotation.compose(b.rotation())
    return Box3D(center, b.size, rotation_to_euler(rot))
