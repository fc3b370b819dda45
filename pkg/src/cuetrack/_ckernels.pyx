# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled pairwise box kernels.

Mirrors :mod:`cuetrack._pykernels` operation for operation so both backends
return bit-identical floats.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _inter(double ax1, double ay1, double ax2, double ay2,
                          double bx1, double by1, double bx2, double by2) noexcept nogil:
    cdef double w = (ax2 if ax2 < bx2 else bx2) - (ax1 if ax1 > bx1 else bx1)
    cdef double h = (ay2 if ay2 < by2 else by2) - (ay1 if ay1 > by1 else by1)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou_matrix(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double inter, area_a, area_b
    with nogil:
        for i in range(n):
            area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
            for j in range(m):
                inter = _inter(a[i, 0], a[i, 1], a[i, 2], a[i, 3],
                               b[j, 0], b[j, 1], b[j, 2], b[j, 3])
                if inter > 0.0:
                    area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
                    o[i, j] = inter / (area_a + area_b - inter)
    return out


def ioc_matrix(const double[:, ::1] parents, const double[:, ::1] children):
    cdef Py_ssize_t n = parents.shape[0], m = children.shape[0], i, j
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double inter, area_c
    with nogil:
        for i in range(n):
            for j in range(m):
                inter = _inter(parents[i, 0], parents[i, 1], parents[i, 2], parents[i, 3],
                               children[j, 0], children[j, 1], children[j, 2], children[j, 3])
                if inter > 0.0:
                    area_c = (children[j, 2] - children[j, 0]) * (children[j, 3] - children[j, 1])
                    o[i, j] = inter / area_c
    return out


def nms_scan(const double[:, ::1] boxes, const Py_ssize_t[::1] order, double iou_threshold):
    """Greedy suppression over ``order``; returns kept indices in visiting order."""
    cdef Py_ssize_t n = order.shape[0], r, s, i, j
    suppressed = np.zeros(boxes.shape[0], dtype=np.uint8)
    cdef unsigned char[::1] sup = suppressed
    keep = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] kv = keep
    cdef Py_ssize_t nk = 0
    cdef double inter, area_i, area_j
    with nogil:
        for r in range(n):
            i = order[r]
            if sup[i]:
                continue
            kv[nk] = i
            nk += 1
            area_i = (boxes[i, 2] - boxes[i, 0]) * (boxes[i, 3] - boxes[i, 1])
            for s in range(r + 1, n):
                j = order[s]
                if sup[j]:
                    continue
                inter = _inter(boxes[i, 0], boxes[i, 1], boxes[i, 2], boxes[i, 3],
                               boxes[j, 0], boxes[j, 1], boxes[j, 2], boxes[j, 3])
                if inter > 0.0:
                    area_j = (boxes[j, 2] - boxes[j, 0]) * (boxes[j, 3] - boxes[j, 1])
                    if inter / (area_i + area_j - inter) > iou_threshold:
                        sup[j] = 1
    return keep[:nk].copy()


def greedy_scan(const Py_ssize_t[::1] rows, const Py_ssize_t[::1] cols,
                Py_ssize_t n_rows, Py_ssize_t n_cols):
    """Take (row, col) entries in the given priority order while both are free."""
    cdef Py_ssize_t e, r, c, n = rows.shape[0], na = 0
    row_used = np.zeros(n_rows, dtype=np.uint8)
    col_used = np.zeros(n_cols, dtype=np.uint8)
    cdef unsigned char[::1] ru = row_used
    cdef unsigned char[::1] cu = col_used
    pairs = np.empty((min(n_rows, n_cols), 2), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] pv = pairs
    with nogil:
        for e in range(n):
            r = rows[e]
            c = cols[e]
            if ru[r] or cu[c]:
                continue
            ru[r] = 1
            cu[c] = 1
            pv[na, 0] = r
            pv[na, 1] = c
            na += 1
    return pairs[:na].copy()
