"""Oriented camera-frame 3D boxes.

The camera frame is +x right, +y down, +z forward. A box carries its center
in meters, its size (w, h, l) along the local x/y/z axes, and three
normalized Euler angles (pitch, roll, yaw) in [-1, 1) that map to radians by
multiplication with pi. The rotation convention, fixed for the lifetime of
the text format, is

    R = R_y(pi * yaw) @ R_x(pi * pitch) @ R_z(pi * roll)

i.e. roll about the camera's forward axis first, then pitch about +x, then
yaw about +y.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from gr3dkit import _kernels
from gr3dkit.errors import DegenerateGeometry, InvalidRotation

_ORTHO_TOL = 1e-9
_GIMBAL_TOL = 1e-9
_TRACE_TIE_TOL = 1e-9

Mat3 = tuple[tuple[float, float, float], ...]


def _matmul(a: Mat3, b: Mat3) -> Mat3:
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(3)) for j in range(3))
        for i in range(3)
    )


def _matvec(a: Mat3, v) -> tuple[float, float, float]:
    return (
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    )


@dataclass(frozen=True)
class RotationMatrix:
    """Proper rotation: orthonormal rows/columns, determinant +1."""

    rows: Mat3

    def __post_init__(self):
        rows = tuple(tuple(float(v) for v in row) for row in self.rows)
        if len(rows) != 3 or any(len(r) != 3 for r in rows):
            raise InvalidRotation("rotation matrix must be 3x3")
        object.__setattr__(self, "rows", rows)
        if not all(math.isfinite(v) for row in rows for v in row):
            raise InvalidRotation("rotation matrix must be finite")
        for i in range(3):
            for j in range(3):
                dot = sum(rows[k][i] * rows[k][j] for k in range(3))
                want = 1.0 if i == j else 0.0
                if abs(dot - want) > _ORTHO_TOL:
                    raise InvalidRotation("matrix columns are not orthonormal")
        det = (
            rows[0][0] * (rows[1][1] * rows[2][2] - rows[1][2] * rows[2][1])
            - rows[0][1] * (rows[1][0] * rows[2][2] - rows[1][2] * rows[2][0])
            + rows[0][2] * (rows[1][0] * rows[2][1] - rows[1][1] * rows[2][0])
        )
        if abs(det - 1.0) > _ORTHO_TOL:
            raise InvalidRotation(f"determinant must be +1, got {det}")

    @classmethod
    def identity(cls) -> "RotationMatrix":
        return cls(((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)))

    @classmethod
    def from_numpy(cls, m) -> "RotationMatrix":
        arr = np.asarray(m, dtype=np.float64)
        if arr.shape != (3, 3):
            raise InvalidRotation(f"rotation matrix must be 3x3, got {arr.shape}")
        return cls(tuple(tuple(row) for row in arr.tolist()))

    def to_numpy(self) -> np.ndarray:
        return np.array(self.rows, dtype=np.float64)

    def compose(self, other: "RotationMatrix") -> "RotationMatrix":
        return RotationMatrix(_matmul(self.rows, other.rows))

    def apply(self, v) -> tuple[float, float, float]:
        return _matvec(self.rows, v)

    @property
    def trace(self) -> float:
        return self.rows[0][0] + self.rows[1][1] + self.rows[2][2]


@dataclass(frozen=True)
class Box3D:
    """Oriented box: center (m), size (w, h, l) (m), normalized Euler angles."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    angles: tuple[float, float, float]

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        size = tuple(float(v) for v in self.size)
        angles = tuple(float(v) for v in self.angles)
        if len(center) != 3 or len(size) != 3 or len(angles) != 3:
            raise ValueError("center, size and angles must each have 3 entries")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "angles", angles)
        vals = center + size + angles
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box fields must be finite, got {vals}")
        if any(s <= 0.0 for s in size):
            raise ValueError(f"box sizes must be positive, got {size}")
        if any(not (-1.0 <= a < 1.0) for a in angles):
            raise ValueError(f"normalized angles must lie in [-1, 1), got {angles}")

    @property
    def volume(self) -> float:
        return self.size[0] * self.size[1] * self.size[2]

    def rotation(self) -> RotationMatrix:
        return euler_to_rotation(self.angles)

    def as_tuple(self) -> tuple[float, ...]:
        return self.center + self.size + self.angles


def euler_to_rotation(angles) -> RotationMatrix:
    """Rotation matrix of a normalized (pitch, roll, yaw) triple."""
    pitch, roll, yaw = (float(a) for a in angles)
    for a in (pitch, roll, yaw):
        if not (-1.0 <= a < 1.0) or not math.isfinite(a):
            raise ValueError(f"normalized angles must lie in [-1, 1), got {angles}")
    ap = math.pi * pitch
    ar = math.pi * roll
    ay = math.pi * yaw
    cp, sp = math.cos(ap), math.sin(ap)
    cr, sr = math.cos(ar), math.sin(ar)
    cy, sy = math.cos(ay), math.sin(ay)
    ry = ((cy, 0.0, sy), (0.0, 1.0, 0.0), (-sy, 0.0, cy))
    rx = ((1.0, 0.0, 0.0), (0.0, cp, -sp), (0.0, sp, cp))
    rz = ((cr, -sr, 0.0), (sr, cr, 0.0), (0.0, 0.0, 1.0))
    return RotationMatrix(_matmul(_matmul(ry, rx), rz))


def rotation_to_euler(rotation) -> tuple[float, float, float]:
    """Normalized (pitch, roll, yaw) reproducing the given rotation.

    At gimbal lock (|pitch| = 0.5 normalized) the decomposition is not
    unique; the convention here forces roll to exactly 0.
    """
    if not isinstance(rotation, RotationMatrix):
        rotation = RotationMatrix.from_numpy(rotation)
    m = rotation.rows
    sp = -m[1][2]
    cp = math.sqrt(m[1][0] * m[1][0] + m[1][1] * m[1][1])
    if cp > _GIMBAL_TOL:
        ap = math.atan2(sp, cp)
        ay = math.atan2(m[0][2], m[2][2])
        ar = math.atan2(m[1][0], m[1][1])
    else:
        ap = math.copysign(0.5 * math.pi, sp)
        ar = 0.0
        ay = math.atan2(-m[2][0], m[0][0])

    def norm(a: float) -> float:
        t = a / math.pi
        if t >= 1.0:
            t -= 2.0
        elif t < -1.0:
            t += 2.0
        return t

    return (norm(ap), norm(ar), norm(ay))


def corners(b: Box3D) -> tuple[tuple[float, float, float], ...]:
    """The eight box corners, sign patterns enumerated x-major."""
    r = b.rotation().rows
    hx, hy, hz = 0.5 * b.size[0], 0.5 * b.size[1], 0.5 * b.size[2]
    cx, cy, cz = b.center
    out = []
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                lx, ly, lz = sx * hx, sy * hy, sz * hz
                out.append((
                    cx + r[0][0] * lx + r[0][1] * ly + r[0][2] * lz,
                    cy + r[1][0] * lx + r[1][1] * ly + r[1][2] * lz,
                    cz + r[2][0] * lx + r[2][1] * ly + r[2][2] * lz,
                ))
    return tuple(out)


def encode_box(b: Box3D) -> np.ndarray:
    """Flat 15-float kernel encoding: center, size, rotation (row-major)."""
    r = b.rotation().rows
    return np.array(
        b.center + b.size + r[0] + r[1] + r[2],
        dtype=np.float64,
    )


def encode_boxes(boxes) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 15), dtype=np.float64)
    return np.stack([encode_box(b) for b in boxes])


def iou3d(a: Box3D, b: Box3D) -> float:
    """Exact IoU via half-space clipping of the two box polytopes."""
    val = _kernels.pair_iou(encode_box(a), encode_box(b))
    if val < 0.0:
        raise DegenerateGeometry("both boxes have zero volume")
    return val


def iou3d_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise exact IoU; degenerate pairs are reported as 0."""
    out = _kernels.iou_matrix(encode_boxes(boxes_a), encode_boxes(boxes_b))
    np.clip(out, 0.0, 1.0, out=out)
    return out


def intersection_volume(a: Box3D, b: Box3D) -> float:
    return _kernels.intersection_volume(encode_box(a), encode_box(b))


# The 24 proper relabelings of the box frame: axis permutations with sign
# flips whose determinant is +1.
def _proper_relabelings():
    out = []
    for perm in itertools.permutations(range(3)):
        parity = 1.0
        p = list(perm)
        for i in range(3):
            for j in range(i + 1, 3):
                if p[i] > p[j]:
                    parity = -parity
        for signs in itertools.product((1.0, -1.0), repeat=3):
            if parity * signs[0] * signs[1] * signs[2] > 0.0:
                out.append((perm, signs))
    return tuple(out)


_RELABELINGS = _proper_relabelings()


def box_variants(b: Box3D) -> list[Box3D]:
    """All 24 equivalent relabelings of a box (same corner point set)."""
    r = b.rotation().rows
    out = []
    for perm, signs in _RELABELINGS:
        cols = []
        for j in range(3):
            i = perm[j]
            s = signs[j]
            cols.append((s * r[0][i], s * r[1][i], s * r[2][i]))
        rows = tuple(
            (cols[0][i], cols[1][i], cols[2][i]) for i in range(3)
        )
        size = (b.size[perm[0]], b.size[perm[1]], b.size[perm[2]])
        angles = rotation_to_euler(RotationMatrix(rows))
        out.append(Box3D(b.center, size, angles))
    return out


def canonicalize(b: Box3D) -> Box3D:
    """Relabel the box frame to the variant closest to the identity basis.

    Among the 24 proper relabelings the one with maximal rotation trace is
    chosen; trace ties within 1e-9 fall back to the lexicographically
    smallest (size, angles) pair so serialization stays deterministic.
    """
    r = b.rotation().rows
    scored = []
    for perm, signs in _RELABELINGS:
        trace = (
            signs[0] * r[0][perm[0]]
            + signs[1] * r[1][perm[1]]
            + signs[2] * r[2][perm[2]]
        )
        scored.append((trace, perm, signs))
    best_trace = max(s[0] for s in scored)

    best_key = None
    best = None
    best_is_identity = False
    for trace, perm, signs in scored:
        if trace < best_trace - _TRACE_TIE_TOL:
            continue
        cols = []
        for j in range(3):
            i = perm[j]
            s = signs[j]
            cols.append((s * r[0][i], s * r[1][i], s * r[2][i]))
        rows = tuple((cols[0][i], cols[1][i], cols[2][i]) for i in range(3))
        size = (b.size[perm[0]], b.size[perm[1]], b.size[perm[2]])
        angles = rotation_to_euler(RotationMatrix(rows))
        key = (size, angles)
        if best_key is None or key < best_key:
            best_key = key
            best = Box3D(b.center, size, angles)
            best_is_identity = perm == (0, 1, 2) and signs == (1.0, 1.0, 1.0)
    # A box that is already canonical passes through bitwise unchanged, which
    # makes the operation exactly idempotent.
    return b if best_is_identity else best
