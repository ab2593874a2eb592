"""Shared helpers and independent oracles for the test suite.

Oracles here deliberately avoid the library's own code paths: Monte Carlo
integration for 3D IoU, explicit enumeration for box relabelings, and a
literal PR-curve evaluation for AP.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from gr3dkit.geom2d import Box2D
from gr3dkit.geom3d import Box3D

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def random_box3d(rng, center_range=1.0, size_range=(0.3, 2.0)) -> Box3D:
    # Pitch stays in the canonical [-0.5, 0.5] branch of the decomposition;
    # roll and yaw cover their full range.
    c = rng.uniform(-center_range, center_range, 3)
    s = rng.uniform(size_range[0], size_range[1], 3)
    pitch = rng.uniform(-0.5, 0.5)
    roll, yaw = np.clip(rng.uniform(-1.0, 1.0, 2), -1.0, math.nextafter(1.0, 0.0))
    return Box3D(tuple(c), tuple(s), (pitch, roll, yaw))


def random_box2d(rng, extent=100.0) -> Box2D:
    x = np.sort(rng.uniform(0.0, extent, 2))
    y = np.sort(rng.uniform(0.0, extent, 2))
    return Box2D(x[0], y[0], x[1], y[1])


def _rotation_of(box: Box3D) -> np.ndarray:
    from gr3dkit.geom3d import euler_to_rotation

    return euler_to_rotation(box.angles).to_numpy()


def box_corners_np(box: Box3D) -> np.ndarray:
    r = _rotation_of(box)
    half = np.asarray(box.size) / 2.0
    local = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=np.float64,
    ) * half
    return np.asarray(box.center) + local @ r.T


def points_in_box(points: np.ndarray, box: Box3D) -> np.ndarray:
    r = _rotation_of(box)
    half = np.asarray(box.size) / 2.0
    local = (points - np.asarray(box.center)) @ r
    return (np.abs(local) <= half).all(axis=1)


# Reused sample buffers, keyed by sample count: allocation and page faults,
# not arithmetic, dominate the oracle's cost otherwise.
_MC_WORKSPACE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _mc_buffers(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _MC_WORKSPACE:
        _MC_WORKSPACE[n] = (
            np.empty((3, n), dtype=np.float32),
            np.empty((3, n), dtype=np.float32),
        )
    return _MC_WORKSPACE[n]


def mc_iou3d(a: Box3D, b: Box3D, n: int, seed: int) -> float:
    """Monte Carlo IoU: uniform samples over the union's bounding box.

    Runs in float32: the membership error it introduces (~1e-7 of samples
    near a face) is far below the sampling noise at any practical n.
    """
    corners = np.vstack([box_corners_np(a), box_corners_np(b)])
    lo = corners.min(axis=0).astype(np.float32)
    hi = corners.max(axis=0).astype(np.float32)
    pts, work = _mc_buffers(n)
    rng = np.random.default_rng(seed)
    rng.random(out=pts, dtype=np.float32)
    for i in range(3):
        row = pts[i]
        row *= hi[i] - lo[i]
        row += lo[i]

    def inside(box: Box3D) -> np.ndarray:
        r = _rotation_of(box).astype(np.float32)
        half = np.asarray(box.size, dtype=np.float32) / 2.0
        shift = r.T @ np.asarray(box.center, dtype=np.float32)
        np.matmul(r.T, pts, out=work)
        mask = None
        for i in range(3):
            w = work[i]
            w -= shift[i]
            np.abs(w, out=w)
            m = w <= half[i]
            mask = m if mask is None else (mask & m)
        return mask

    in_a = inside(a)
    in_b = inside(b)
    n_union = int((in_a | in_b).sum())
    if n_union == 0:
        return 0.0
    return int((in_a & in_b).sum()) / n_union


def brute_force_variants(box: Box3D):
    """All 24 proper relabelings, enumerated from scratch: permutation
    matrices with sign flips and det +1 applied to the rotation columns."""
    import itertools

    r = _rotation_of(box)
    size = np.asarray(box.size)
    out = []
    for perm in itertools.permutations(range(3)):
        p = np.zeros((3, 3))
        for j, i in enumerate(perm):
            p[i, j] = 1.0
        for signs in itertools.product((1.0, -1.0), repeat=3):
            m = p @ np.diag(signs)
            if np.linalg.det(m) < 0:
                continue
            rv = r @ m
            sv = size[list(perm)]
            out.append((rv, sv))
    return out


def interpolated_ap_oracle(scored_labels, num_gt):
    """Literal 101-point interpolated AP: max precision at recall >= r."""
    if num_gt == 0 and not scored_labels:
        return None
    if num_gt == 0 or not scored_labels:
        return 0.0
    order = sorted(range(len(scored_labels)), key=lambda i: -scored_labels[i][0])
    tp = fp = 0
    points = []
    for i in order:
        if scored_labels[i][1]:
            tp += 1
        else:
            fp += 1
        points.append((tp / num_gt, tp / (tp + fp)))
    total = 0.0
    for k in range(101):
        r = k / 100.0
        candidates = [p for rec, p in points if rec >= r]
        total += max(candidates) if candidates else 0.0
    return total / 101.0


@pytest.fixture
def rng():
    return np.random.default_rng(20240801)
