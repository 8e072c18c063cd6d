# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Contracts are documented once in ``_pure.py``; the two backends must stay
numerically interchangeable.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, sqrt

BACKEND = "native"


def smooth_heights(x, y, z, double sigma):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] za = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t n = xa.shape[0]
    out = np.empty(n, dtype=np.float64)
    if n == 0:
        return out

    # bucket points on a grid of width sigma; 3*sigma reach = 4 cells
    cdef double x0 = xa.min()
    cdef double y0 = ya.min()
    cdef double xmax = xa.max()
    cdef double ymax = ya.max()
    cdef Py_ssize_t ncx = <Py_ssize_t>((xmax - x0) / sigma) + 1
    cdef Py_ssize_t ncy = <Py_ssize_t>((ymax - y0) / sigma) + 1
    ixa = np.clip(((xa - x0) / sigma).astype(np.int64), 0, ncx - 1)
    iya = np.clip(((ya - y0) / sigma).astype(np.int64), 0, ncy - 1)
    keys = ixa * ncy + iya
    order_np = np.argsort(keys, kind="stable")
    starts_np = np.searchsorted(keys[order_np], np.arange(ncx * ncy + 1))

    cdef cnp.ndarray[cnp.int64_t, ndim=1] ix = ixa
    cdef cnp.ndarray[cnp.int64_t, ndim=1] iy = iya
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = order_np.astype(np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] starts = starts_np.astype(np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] res = out

    cdef double r2 = 9.0 * sigma * sigma
    cdef double inv = 1.0 / (2.0 * sigma * sigma)
    cdef Py_ssize_t p, q, s, e, k, cx, cy, dx, dy
    cdef double wsum, wz, d2, w
    for p in range(n):
        wsum = 1.0
        wz = za[p]
        for dx in range(-4, 5):
            cx = ix[p] + dx
            if cx < 0 or cx >= ncx:
                continue
            for dy in range(-4, 5):
                cy = iy[p] + dy
                if cy < 0 or cy >= ncy:
                    continue
                s = starts[cx * ncy + cy]
                e = starts[cx * ncy + cy + 1]
                for k in range(s, e):
                    q = order[k]
                    if q == p:
                        continue
                    d2 = (xa[p] - xa[q]) ** 2 + (ya[p] - ya[q]) ** 2
                    if d2 <= r2:
                        w = exp(-d2 * inv)
                        wsum += w
                        wz += w * za[q]
        res[p] = wz / wsum
    return out


def locale_histograms(x, y, z, double x0, double y0, double cell,
                      Py_ssize_t ncx, Py_ssize_t ncy, double radius,
                      double bin_width, Py_ssize_t nbins):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] za = np.ascontiguousarray(z, dtype=np.float64)
    cdef cnp.ndarray[cnp.int32_t, ndim=3] hist = np.zeros((ncx, ncy, nbins), dtype=np.int32)
    cdef Py_ssize_t n = xa.shape[0]
    if n == 0:
        return np.asarray(hist)

    cdef Py_ssize_t reach = <Py_ssize_t>ceil(radius / cell + 0.5) + 1
    cdef double r2 = radius * radius
    cdef Py_ssize_t p, ix, iy, zb, dx, dy, tx, ty
    cdef double ddx, ddy
    for p in range(n):
        ix = <Py_ssize_t>((xa[p] - x0) / cell)
        if ix < 0:
            ix = 0
        elif ix >= ncx:
            ix = ncx - 1
        iy = <Py_ssize_t>((ya[p] - y0) / cell)
        if iy < 0:
            iy = 0
        elif iy >= ncy:
            iy = ncy - 1
        zb = <Py_ssize_t>(za[p] / bin_width)
        if zb < 0:
            zb = 0
        elif zb >= nbins:
            zb = nbins - 1
        for dx in range(-reach, reach + 1):
            tx = ix + dx
            if tx < 0 or tx >= ncx:
                continue
            ddx = (x0 + (tx + 0.5) * cell) - xa[p]
            for dy in range(-reach, reach + 1):
                ty = iy + dy
                if ty < 0 or ty >= ncy:
                    continue
                ddy = (y0 + (ty + 0.5) * cell) - ya[p]
                if ddx * ddx + ddy * ddy <= r2:
                    hist[tx, ty, zb] += 1
    return np.asarray(hist)


def points_in_convex_polygon(px, py, verts):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pxa = np.ascontiguousarray(px, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pya = np.ascontiguousarray(py, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v = np.ascontiguousarray(verts, dtype=np.float64)
    cdef Py_ssize_t n = pxa.shape[0]
    cdef Py_ssize_t k = v.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] inside = np.ones(n, dtype=np.uint8)
    cdef Py_ssize_t a, b, p
    cdef double ex, ey, tol, cross
    for a in range(k):
        b = (a + 1) % k
        ex = v[b, 0] - v[a, 0]
        ey = v[b, 1] - v[a, 1]
        tol = 1e-9 * sqrt(ex * ex + ey * ey)
        for p in range(n):
            if inside[p]:
                cross = ex * (pya[p] - v[a, 1]) - ey * (pxa[p] - v[a, 0])
                if cross < -tol:
                    inside[p] = 0
    return np.asarray(inside).view(np.bool_)
