# cython: language_level=3
"""Oriented-box overlap kernel, compiled backend.

Transliteration of overlap_py.py with C buffers. Keep the arithmetic order
identical in both files so the backends agree bit for bit.
"""

from libc.math cimport atan2, fabs, sqrt

import numpy as np

BACKEND = "cython"

DEF CLIP_EPS = 1e-12
DEF MERGE_EPS = 1e-10
DEF FACE_EPS = 1e-8
DEF MAX_POLY = 32
DEF MAX_VERTS = 256

# Corner sign patterns, x-major (x slowest, z fastest).
cdef double _SIGNS[8][3]
_SIGNS = [
    [-1.0, -1.0, -1.0], [-1.0, -1.0, 1.0], [-1.0, 1.0, -1.0], [-1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0], [1.0, -1.0, 1.0], [1.0, 1.0, -1.0], [1.0, 1.0, 1.0],
]

cdef int _FACES[6][4]
_FACES = [
    [0, 1, 3, 2], [4, 5, 7, 6],
    [0, 1, 5, 4], [2, 3, 7, 6],
    [0, 2, 6, 4], [1, 3, 7, 5],
]


cdef void _corners(const double* e, double* out) noexcept nogil:
    cdef double cx = e[0], cy = e[1], cz = e[2]
    cdef double hx = 0.5 * e[3], hy = 0.5 * e[4], hz = 0.5 * e[5]
    cdef double lx, ly, lz
    cdef int i
    for i in range(8):
        lx = _SIGNS[i][0] * hx
        ly = _SIGNS[i][1] * hy
        lz = _SIGNS[i][2] * hz
        out[3 * i] = cx + e[6] * lx + e[7] * ly + e[8] * lz
        out[3 * i + 1] = cy + e[9] * lx + e[10] * ly + e[11] * lz
        out[3 * i + 2] = cz + e[12] * lx + e[13] * ly + e[14] * lz


cdef void _halfspaces(const double* e, double* out) noexcept nogil:
    # Six outward half-spaces, 10 doubles each:
    # nx ny nz d ux uy uz wx wy wz.
    cdef int axis, ju, jw, k
    cdef double nx, ny, nz, half, proj
    for axis in range(3):
        nx = e[6 + axis]
        ny = e[9 + axis]
        nz = e[12 + axis]
        half = 0.5 * e[3 + axis]
        proj = nx * e[0] + ny * e[1] + nz * e[2]
        ju = 6 + (axis + 1) % 3
        jw = 6 + (axis + 2) % 3
        k = 2 * axis * 10
        out[k] = nx
        out[k + 1] = ny
        out[k + 2] = nz
        out[k + 3] = proj + half
        out[k + 4] = e[ju]
        out[k + 5] = e[ju + 3]
        out[k + 6] = e[ju + 6]
        out[k + 7] = e[jw]
        out[k + 8] = e[jw + 3]
        out[k + 9] = e[jw + 6]
        k += 10
        out[k] = -nx
        out[k + 1] = -ny
        out[k + 2] = -nz
        out[k + 3] = -proj + half
        out[k + 4] = e[ju]
        out[k + 5] = e[ju + 3]
        out[k + 6] = e[ju + 6]
        out[k + 7] = e[jw]
        out[k + 8] = e[jw + 3]
        out[k + 9] = e[jw + 6]


cdef int _clip(const double* poly, int m, double nx, double ny, double nz,
               double d, double* out) noexcept nogil:
    # Sutherland-Hodgman clip of a convex polygon against n.x <= d.
    cdef int n_out = 0
    cdef int i
    cdef double sx, sy, sz, sdist, ex, ey, ez, edist, den, t
    cdef bint e_in, s_in
    if m == 0:
        return 0
    sx = poly[3 * (m - 1)]
    sy = poly[3 * (m - 1) + 1]
    sz = poly[3 * (m - 1) + 2]
    sdist = nx * sx + ny * sy + nz * sz - d
    for i in range(m):
        ex = poly[3 * i]
        ey = poly[3 * i + 1]
        ez = poly[3 * i + 2]
        edist = nx * ex + ny * ey + nz * ez - d
        e_in = edist <= CLIP_EPS
        s_in = sdist <= CLIP_EPS
        if e_in != s_in and n_out < MAX_POLY:
            den = edist - sdist
            if den != 0.0:
                t = -sdist / den
            else:
                t = 0.5
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            out[3 * n_out] = sx + t * (ex - sx)
            out[3 * n_out + 1] = sy + t * (ey - sy)
            out[3 * n_out + 2] = sz + t * (ez - sz)
            n_out += 1
        if e_in and n_out < MAX_POLY:
            out[3 * n_out] = ex
            out[3 * n_out + 1] = ey
            out[3 * n_out + 2] = ez
            n_out += 1
        sx = ex
        sy = ey
        sz = ez
        sdist = edist
    return n_out


cdef int _collect_clipped(const double* corners, const double* halves,
                          double* cand, int n_cand) noexcept nogil:
    cdef double buf_a[3 * MAX_POLY]
    cdef double buf_b[3 * MAX_POLY]
    cdef double* cur
    cdef double* nxt
    cdef double* tmp
    cdef int f, h, i, m
    for f in range(6):
        for i in range(4):
            buf_a[3 * i] = corners[3 * _FACES[f][i]]
            buf_a[3 * i + 1] = corners[3 * _FACES[f][i] + 1]
            buf_a[3 * i + 2] = corners[3 * _FACES[f][i] + 2]
        m = 4
        cur = buf_a
        nxt = buf_b
        for h in range(6):
            m = _clip(cur, m, halves[10 * h], halves[10 * h + 1],
                      halves[10 * h + 2], halves[10 * h + 3], nxt)
            tmp = cur
            cur = nxt
            nxt = tmp
            if m == 0:
                break
        for i in range(m):
            if n_cand < MAX_VERTS:
                cand[3 * n_cand] = cur[3 * i]
                cand[3 * n_cand + 1] = cur[3 * i + 1]
                cand[3 * n_cand + 2] = cur[3 * i + 2]
                n_cand += 1
    return n_cand


cdef double _intersection_volume(const double* a, const double* b) noexcept nogil:
    cdef double corners_a[24]
    cdef double corners_b[24]
    cdef double half_a[60]
    cdef double half_b[60]
    cdef double cand[3 * MAX_VERTS]
    cdef double verts[3 * MAX_VERTS]
    cdef double us[MAX_VERTS]
    cdef double ws[MAX_VERTS]
    cdef double ang[MAX_VERTS]
    cdef double planes[120]
    cdef int n_cand = 0, n_verts = 0
    cdef int i, j, k, idx, nxt
    cdef double px, py, pz, dx, dy, dz, inv, cx, cy, cz
    cdef double nx, ny, nz, d, tol, face_tol
    cdef double ux, uy, uz, wx, wy, wz, mu, mw
    cdef double ka, ku, kw, area2, area, dist, total
    cdef bint dup

    _corners(a, corners_a)
    _corners(b, corners_b)
    _halfspaces(a, half_a)
    _halfspaces(b, half_b)

    n_cand = _collect_clipped(corners_a, half_b, cand, n_cand)
    n_cand = _collect_clipped(corners_b, half_a, cand, n_cand)

    for i in range(n_cand):
        px = cand[3 * i]
        py = cand[3 * i + 1]
        pz = cand[3 * i + 2]
        dup = False
        for j in range(n_verts):
            dx = px - verts[3 * j]
            dy = py - verts[3 * j + 1]
            dz = pz - verts[3 * j + 2]
            if dx * dx + dy * dy + dz * dz <= MERGE_EPS * MERGE_EPS:
                dup = True
                break
        if not dup:
            verts[3 * n_verts] = px
            verts[3 * n_verts + 1] = py
            verts[3 * n_verts + 2] = pz
            n_verts += 1
    if n_verts < 4:
        return 0.0

    inv = 1.0 / n_verts
    cx = 0.0
    cy = 0.0
    cz = 0.0
    for i in range(n_verts):
        cx += verts[3 * i]
        cy += verts[3 * i + 1]
        cz += verts[3 * i + 2]
    cx *= inv
    cy *= inv
    cz *= inv

    for i in range(60):
        planes[i] = half_a[i]
        planes[60 + i] = half_b[i]

    total = 0.0
    for i in range(12):
        nx = planes[10 * i]
        ny = planes[10 * i + 1]
        nz = planes[10 * i + 2]
        d = planes[10 * i + 3]
        dup = False
        for j in range(i):
            if nx * planes[10 * j] + ny * planes[10 * j + 1] + nz * planes[10 * j + 2] >= 1.0 - 1e-9:
                tol = 1e-9 * (1.0 if fabs(d) < 1.0 else fabs(d))
                if fabs(d - planes[10 * j + 3]) <= tol:
                    dup = True
                    break
        if dup:
            continue

        face_tol = FACE_EPS * (1.0 if fabs(d) < 1.0 else fabs(d))
        ux = planes[10 * i + 4]
        uy = planes[10 * i + 5]
        uz = planes[10 * i + 6]
        wx = planes[10 * i + 7]
        wy = planes[10 * i + 8]
        wz = planes[10 * i + 9]
        k = 0
        for j in range(n_verts):
            px = verts[3 * j]
            py = verts[3 * j + 1]
            pz = verts[3 * j + 2]
            if fabs(nx * px + ny * py + nz * pz - d) <= face_tol:
                us[k] = ux * px + uy * py + uz * pz
                ws[k] = wx * px + wy * py + wz * pz
                k += 1
        if k < 3:
            continue

        mu = 0.0
        mw = 0.0
        for idx in range(k):
            mu += us[idx]
            mw += ws[idx]
        mu /= k
        mw /= k
        for idx in range(k):
            ang[idx] = atan2(ws[idx] - mw, us[idx] - mu)

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
        area = 0.5 * fabs(area2)
        dist = fabs(nx * cx + ny * cy + nz * cz - d)
        total += dist * area

    return total / 3.0


cdef double _pair_iou(const double* a, const double* b) noexcept nogil:
    # Canonical operand order makes the result exactly symmetric.
    cdef const double* lo = a
    cdef const double* hi = b
    cdef const double* tmp
    cdef int i
    cdef bint swap = False
    for i in range(15):
        if a[i] < b[i]:
            break
        if a[i] > b[i]:
            swap = True
            break
    if swap:
        tmp = lo
        lo = hi
        hi = tmp

    cdef double va = lo[3] * lo[4] * lo[5]
    cdef double vb = hi[3] * hi[4] * hi[5]
    if va <= 0.0 and vb <= 0.0:
        return -1.0

    cdef double dx = lo[0] - hi[0]
    cdef double dy = lo[1] - hi[1]
    cdef double dz = lo[2] - hi[2]
    cdef double ra = 0.5 * sqrt(lo[3] * lo[3] + lo[4] * lo[4] + lo[5] * lo[5])
    cdef double rb = 0.5 * sqrt(hi[3] * hi[3] + hi[4] * hi[4] + hi[5] * hi[5])
    cdef double reach = ra + rb
    if dx * dx + dy * dy + dz * dz > reach * reach:
        return 0.0

    cdef double vi = _intersection_volume(lo, hi)
    if vi <= 0.0:
        return 0.0
    cdef double vmin = va if va < vb else vb
    if vi > vmin:
        vi = vmin
    cdef double union_ = va + vb - vi
    if union_ <= 0.0:
        return -1.0
    cdef double iou = vi / union_
    if iou < 0.0:
        return 0.0
    if iou > 1.0:
        return 1.0
    return iou


def intersection_volume(a, b):
    """Exact intersection volume of two oriented boxes (15-float encodings)."""
    cdef double[::1] ea = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] eb = np.ascontiguousarray(b, dtype=np.float64)
    if ea.shape[0] != 15 or eb.shape[0] != 15:
        raise ValueError("box encodings must have 15 elements")
    return _intersection_volume(&ea[0], &eb[0])


def pair_iou(a, b):
    """IoU of two encoded boxes. Returns -1.0 when both are degenerate."""
    cdef double[::1] ea = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] eb = np.ascontiguousarray(b, dtype=np.float64)
    if ea.shape[0] != 15 or eb.shape[0] != 15:
        raise ValueError("box encodings must have 15 elements")
    return _pair_iou(&ea[0], &eb[0])


def iou_matrix(boxes_a, boxes_b):
    """Pairwise IoU of two encoded box stacks, shape (N, 15) x (M, 15)."""
    arr_a = np.ascontiguousarray(boxes_a, dtype=np.float64)
    arr_b = np.ascontiguousarray(boxes_b, dtype=np.float64)
    if arr_a.ndim != 2 or arr_a.shape[1] != 15:
        raise ValueError(f"boxes_a must have shape (N, 15), got {arr_a.shape}")
    if arr_b.ndim != 2 or arr_b.shape[1] != 15:
        raise ValueError(f"boxes_b must have shape (M, 15), got {arr_b.shape}")
    cdef double[:, ::1] va = arr_a
    cdef double[:, ::1] vb = arr_b
    cdef Py_ssize_t n = va.shape[0]
    cdef Py_ssize_t m = vb.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] vo = out
    cdef Py_ssize_t i, j
    if n > 0 and m > 0:
        with nogil:
            for i in range(n):
                for j in range(m):
                    vo[i, j] = _pair_iou(&va[i, 0], &vb[j, 0])
    return out
