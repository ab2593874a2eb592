"""Oriented-box overlap kernel, pure-Python backend.

Fallback used when the compiled extension is unavailable (or when
``GR3DKIT_PURE`` is set). It mirrors ``overlap.pyx`` operation for operation;
keep the arithmetic order identical in both files so the backends agree
bit for bit.

Boxes cross the kernel boundary as flat 15-float encodings:
``[cx, cy, cz, w, h, l, r00, r01, r02, r10, r11, r12, r20, r21, r22]``
with the rotation matrix stored row-major.
"""

import math

import numpy as np

CLIP_EPS = 1e-12    # half-space membership slack while clipping
MERGE_EPS = 1e-10   # vertex merge radius ahead of volume accumulation
FACE_EPS = 1e-8     # plane membership slack when regrouping merged vertices

# Corner sign patterns, x-major (x slowest, z fastest).
_SIGNS = (
    (-1.0, -1.0, -1.0), (-1.0, -1.0, 1.0), (-1.0, 1.0, -1.0), (-1.0, 1.0, 1.0),
    (1.0, -1.0, -1.0), (1.0, -1.0, 1.0), (1.0, 1.0, -1.0), (1.0, 1.0, 1.0),
)

# Cyclic vertex order of each cube face under the corner indexing above.
_FACES = (
    (0, 1, 3, 2), (4, 5, 7, 6),   # -x, +x
    (0, 1, 5, 4), (2, 3, 7, 6),   # -y, +y
    (0, 2, 6, 4), (1, 3, 7, 5),   # -z, +z
)

BACKEND = "python"


def _corners(e):
    cx, cy, cz = e[0], e[1], e[2]
    hx, hy, hz = 0.5 * e[3], 0.5 * e[4], 0.5 * e[5]
    out = []
    for sx, sy, sz in _SIGNS:
        lx = sx * hx
        ly = sy * hy
        lz = sz * hz
        out.append((
            cx + e[6] * lx + e[7] * ly + e[8] * lz,
            cy + e[9] * lx + e[10] * ly + e[11] * lz,
            cz + e[12] * lx + e[13] * ly + e[14] * lz,
        ))
    return out


def _halfspaces(e):
    # Six outward half-spaces n.x <= d; basis vectors of the two in-plane
    # axes ride along for the face regrouping stage.
    out = []
    for axis in range(3):
        nx, ny, nz = e[6 + axis], e[9 + axis], e[12 + axis]
        half = 0.5 * e[3 + axis]
        proj = nx * e[0] + ny * e[1] + nz * e[2]
        ju = 6 + (axis + 1) % 3
        jw = 6 + (axis + 2) % 3
        basis = (e[ju], e[ju + 3], e[ju + 6], e[jw], e[jw + 3], e[jw + 6])
        out.append((nx, ny, nz, proj + half) + basis)
        out.append((-nx, -ny, -nz, -proj + half) + basis)
    return out


def _clip(poly, nx, ny, nz, d):
    # Sutherland-Hodgman clip of a convex polygon against n.x <= d.
    out = []
    m = len(poly)
    if m == 0:
        return out
    sx, sy, sz = poly[m - 1]
    sdist = nx * sx + ny * sy + nz * sz - d
    for i in range(m):
        ex, ey, ez = poly[i]
        edist = nx * ex + ny * ey + nz * ez - d
        e_in = edist <= CLIP_EPS
        s_in = sdist <= CLIP_EPS
        if e_in != s_in:
            den = edist - sdist
            if den != 0.0:
                t = -sdist / den
            else:
                t = 0.5
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            out.append((sx + t * (ex - sx), sy + t * (ey - sy), sz + t * (ez - sz)))
        if e_in:
            out.append((ex, ey, ez))
        sx, sy, sz, sdist = ex, ey, ez, edist
    return out


def intersection_volume(a, b):
    """Exact intersection volume of two oriented boxes (15-float encodings)."""
    corners_a = _corners(a)
    corners_b = _corners(b)
    half_a = _halfspaces(a)
    half_b = _halfspaces(b)

    # Clip each box's faces against the other's half-spaces; the surviving
    # polygon vertices are exactly the vertices of the intersection polytope.
    cand = []
    for face in _FACES:
        poly = [corners_a[i] for i in face]
        for hs in half_b:
            poly = _clip(poly, hs[0], hs[1], hs[2], hs[3])
            if not poly:
                break
        cand.extend(poly)
    for face in _FACES:
        poly = [corners_b[i] for i in face]
        for hs in half_a:
            poly = _clip(poly, hs[0], hs[1], hs[2], hs[3])
            if not poly:
                break
        cand.extend(poly)

    # Merge duplicates (first occurrence wins).
    verts = []
    for px, py, pz in cand:
        dup = False
        for qx, qy, qz in verts:
            dx = px - qx
            dy = py - qy
            dz = pz - qz
            if dx * dx + dy * dy + dz * dz <= MERGE_EPS * MERGE_EPS:
                dup = True
                break
        if not dup:
            verts.append((px, py, pz))
    if len(verts) < 4:
        return 0.0

    inv = 1.0 / len(verts)
    cx = 0.0
    cy = 0.0
    cz = 0.0
    for px, py, pz in verts:
        cx += px
        cy += py
        cz += pz
    cx *= inv
    cy *= inv
    cz *= inv

    # The polytope is convex, so its volume is the sum of pyramids from the
    # interior point to each face. Every face lies on one of the twelve box
    # planes; coplanar duplicates (box faces flush against each other) are
    # counted once.
    planes = half_a + half_b
    total = 0.0
    for i, pl in enumerate(planes):
        nx, ny, nz, d = pl[0], pl[1], pl[2], pl[3]
        dup = False
        for j in range(i):
            q = planes[j]
            if nx * q[0] + ny * q[1] + nz * q[2] >= 1.0 - 1e-9:
                tol = 1e-9 * (1.0 if abs(d) < 1.0 else abs(d))
                if abs(d - q[3]) <= tol:
                    dup = True
                    break
        if dup:
            continue

        face_tol = FACE_EPS * (1.0 if abs(d) < 1.0 else abs(d))
        ux, uy, uz = pl[4], pl[5], pl[6]
        wx, wy, wz = pl[7], pl[8], pl[9]
        us = []
        ws = []
        for px, py, pz in verts:
            if abs(nx * px + ny * py + nz * pz - d) <= face_tol:
                us.append(ux * px + uy * py + uz * pz)
                ws.append(wx * px + wy * py + wz * pz)
        k = len(us)
        if k < 3:
            continue

        mu = 0.0
        mw = 0.0
        for idx in range(k):
            mu += us[idx]
            mw += ws[idx]
        mu /= k
        mw /= k
        ang = [math.atan2(ws[idx] - mw, us[idx] - mu) for idx in range(k)]

        # Insertion sort by angle; mirrors the compiled backend exactly.
        for idx in range(1, k):
            ka = ang[idx]
            ku = us[idx]
            kw = ws[idx]
            j = idx - 1
            while j >= 0 and ang[j] > ka:
                ang[j + 1] = ang[j]
                us[j + 1] = us[j]
                ws[j + 1] = ws[j]
                j -= 1
            ang[j + 1] = ka
            us[j + 1] = ku
            ws[j + 1] = kw

        area2 = 0.0
        for idx in range(k):
            nxt = idx + 1
            if nxt == k:
                nxt = 0
            area2 += us[idx] * ws[nxt] - us[nxt] * ws[idx]
        area = 0.5 * abs(area2)
        dist = abs(nx * cx + ny * cy + nz * cz - d)
        total += dist * area

    return total / 3.0


def pair_iou(a, b):
    """IoU of two encoded boxes. Returns -1.0 when both are degenerate."""
    a = tuple(map(float, a))
    b = tuple(map(float, b))
    return _pair_iou(a, b)


def _pair_iou(a, b):
    # Canonical operand order makes the result exactly symmetric.
    swap = False
    for i in range(15):
        if a[i] < b[i]:
            break
        if a[i] > b[i]:
            swap = True
            break
    if swap:
        a, b = b, a

    va = a[3] * a[4] * a[5]
    vb = b[3] * b[4] * b[5]
    if va <= 0.0 and vb <= 0.0:
        return -1.0

    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    ra = 0.5 * math.sqrt(a[3] * a[3] + a[4] * a[4] + a[5] * a[5])
    rb = 0.5 * math.sqrt(b[3] * b[3] + b[4] * b[4] + b[5] * b[5])
    reach = ra + rb
    if dx * dx + dy * dy + dz * dz > reach * reach:
        return 0.0

    vi = intersection_volume(a, b)
    if vi <= 0.0:
        return 0.0
    vmin = va if va < vb else vb
    if vi > vmin:
        vi = vmin
    union = va + vb - vi
    if union <= 0.0:
        return -1.0
    iou = vi / union
    if iou < 0.0:
        return 0.0
    if iou > 1.0:
        return 1.0
    return iou


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU of two encoded box stacks, shape (N, 15) x (M, 15)."""
    arr_a = np.ascontiguousarray(boxes_a, dtype=np.float64)
    arr_b = np.ascontiguousarray(boxes_b, dtype=np.float64)
    if arr_a.ndim != 2 or arr_a.shape[1] != 15:
        raise ValueError(f"boxes_a must have shape (N, 15), got {arr_a.shape}")
    if arr_b.ndim != 2 or arr_b.shape[1] != 15:
        raise ValueError(f"boxes_b must have shape (M, 15), got {arr_b.shape}")
    rows_a = [tuple(row) for row in arr_a.tolist()]
    rows_b = [tuple(row) for row in arr_b.tolist()]
    out = np.empty((len(rows_a), len(rows_b)), dtype=np.float64)
    for i, ea in enumerate(rows_a):
        for j, eb in enumerate(rows_b):
            out[i, j] = _pair_iou(ea, eb)
    return out
