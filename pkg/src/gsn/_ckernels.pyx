# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Must stay numerically identical to ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def jacobi_eigh(double[:, ::1] a_in, double tol, int max_sweeps):
    """Cyclic Jacobi on a symmetric matrix; returns (diag, V, sweeps)."""
    cdef Py_ssize_t n = a_in.shape[0]
    a_arr = np.array(a_in, dtype=np.float64, copy=True)
    v_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] v = v_arr
    cdef Py_ssize_t p, q, k
    cdef int sweep = 0
    cdef double off, apq, theta, t, c, s, akp, akq
    while True:
        off = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    off += a[p, q] * a[p, q]
        off = sqrt(off)
        if off < tol or sweep >= max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    akp = a[p, k]
                    akq = a[q, k]
                    a[p, k] = c * akp - s * akq
                    a[q, k] = s * akp + c * akq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    akp = v[k, p]
                    akq = v[k, q]
                    v[k, p] = c * akp - s * akq
                    v[k, q] = s * akp + c * akq
        sweep += 1
    return np.diag(a_arr).copy(), v_arr, sweep


def slic_assign(double[:, :, ::1] lab, double[:, ::1] centers, double step,
                double compactness):
    """Assign pixels to the nearest center inside a +-step window."""
    cdef Py_ssize_t h = lab.shape[0], w = lab.shape[1], kc = centers.shape[0]
    labels_arr = np.full((h, w), -1, dtype=np.int64)
    dist_arr = np.full((h, w), np.inf, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] labels = labels_arr
    cdef double[:, ::1] dist = dist_arr
    cdef double weight = (compactness / step) * (compactness / step)
    cdef Py_ssize_t k, y, x, y0, y1, x0, x1
    cdef double cl, ca, cb, cy, cx, dl, da, db, dy, dx, d
    for k in range(kc):
        cl = centers[k, 0]
        ca = centers[k, 1]
        cb = centers[k, 2]
        cy = centers[k, 3]
        cx = centers[k, 4]
        y0 = <Py_ssize_t>max(0.0, cy - step)
        y1 = <Py_ssize_t>min(<double>h, cy + step + 1.0)
        x0 = <Py_ssize_t>max(0.0, cx - step)
        x1 = <Py_ssize_t>min(<double>w, cx + step + 1.0)
        for y in range(y0, y1):
            for x in range(x0, x1):
                dl = lab[y, x, 0] - cl
                da = lab[y, x, 1] - ca
                db = lab[y, x, 2] - cb
                dy = y - cy
                dx = x - cx
                d = (dl * dl + da * da + db * db) + (dy * dy + dx * dx) * weight
                if d < dist[y, x]:
                    dist[y, x] = d
                    labels[y, x] = k
    return labels_arr, dist_arr


def label_components(cnp.int64_t[:, ::1] labels):
    """4-connected components of equal-label pixels, ids in scanline order."""
    cdef Py_ssize_t h = labels.shape[0], w = labels.shape[1]
    comp_arr = np.full((h, w), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] comp = comp_arr
    stack_arr = np.empty(h * w, dtype=np.int64)
    cdef cnp.int64_t[::1] stack = stack_arr
    cdef Py_ssize_t y, x, cy, cx, top, idx
    cdef cnp.int64_t cur = 0, lbl
    for y in range(h):
        for x in range(w):
            if comp[y, x] >= 0:
                continue
            lbl = labels[y, x]
            comp[y, x] = cur
            top = 0
            stack[top] = y * w + x
            top += 1
            while top > 0:
                top -= 1
                idx = stack[top]
                cy = idx // w
                cx = idx - cy * w
                if cy > 0 and comp[cy - 1, cx] < 0 and labels[cy - 1, cx] == lbl:
                    comp[cy - 1, cx] = cur
                    stack[top] = idx - w
                    top += 1
                if cy < h - 1 and comp[cy + 1, cx] < 0 and labels[cy + 1, cx] == lbl:
                    comp[cy + 1, cx] = cur
                    stack[top] = idx + w
                    top += 1
                if cx > 0 and comp[cy, cx - 1] < 0 and labels[cy, cx - 1] == lbl:
                    comp[cy, cx - 1] = cur
                    stack[top] = idx - 1
                    top += 1
                if cx < w - 1 and comp[cy, cx + 1] < 0 and labels[cy, cx + 1] == lbl:
                    comp[cy, cx + 1] = cur
                    stack[top] = idx + 1
                    top += 1
            cur += 1
    return comp_arr, int(cur)
