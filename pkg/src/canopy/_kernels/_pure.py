"""Pure-python (numpy/scipy) implementations of the hot kernels.

Selected automatically when the compiled extension is unavailable, or when
``CANOPY_NO_EXT`` is set. Must stay numerically interchangeable with
``_native.pyx``: same distance tests, same weights, same bin conventions.
"""

import numpy as np
from scipy.spatial import cKDTree

BACKEND = "pure"


def smooth_heights(x, y, z, sigma):
    """Gaussian-weighted mean of neighbor heights within 3*sigma.

    Weights are truncated at 3*sigma and renormalized; every point carries
    self-weight 1, so an isolated point is returned unchanged.
    """
    n = x.shape[0]
    if n == 0:
        return z.copy()
    tree = cKDTree(np.column_stack((x, y)))
    pairs = tree.query_pairs(3.0 * sigma, output_type="ndarray")
    wsum = np.ones(n)
    wz = z.copy()
    if pairs.size:
        i, j = pairs[:, 0], pairs[:, 1]
        d2 = (x[i] - x[j]) ** 2 + (y[i] - y[j]) ** 2
        w = np.exp(-d2 / (2.0 * sigma * sigma))
        np.add.at(wsum, i, w)
        np.add.at(wsum, j, w)
        np.add.at(wz, i, w * z[j])
        np.add.at(wz, j, w * z[i])
    return wz / wsum


def locale_histograms(x, y, z, x0, y0, cell, ncx, ncy, radius, bin_width, nbins):
    """Per-cell height histograms over circular locales.

    For every grid cell, counts the points whose horizontal distance to the
    cell center is <= radius, binned by height (bin index floor(z/bin_width),
    clamped to nbins-1). Returns an int32 array of shape (ncx, ncy, nbins).
    """
    hist = np.zeros((ncx, ncy, nbins), dtype=np.int32)
    n = x.shape[0]
    if n == 0:
        return hist
    ix = np.clip(((x - x0) / cell).astype(np.int64), 0, ncx - 1)
    iy = np.clip(((y - y0) / cell).astype(np.int64), 0, ncy - 1)
    zb = np.clip((z / bin_width).astype(np.int64), 0, nbins - 1)
    reach = int(np.ceil(radius / cell + 0.5)) + 1
    r2 = radius * radius
    for dx in range(-reach, reach + 1):
        tx = ix + dx
        okx = (tx >= 0) & (tx < ncx)
        ddx = (x0 + (tx + 0.5) * cell) - x
        for dy in range(-reach, reach + 1):
            ty = iy + dy
            ddy = (y0 + (ty + 0.5) * cell) - y
            m = okx & (ty >= 0) & (ty < ncy) & (ddx * ddx + ddy * ddy <= r2)
            if m.any():
                np.add.at(hist, (tx[m], ty[m], zb[m]), 1)
    return hist


def points_in_convex_polygon(px, py, verts):
    """Inside-or-on test against a counterclockwise convex polygon.

    A point passes when it lies on the non-negative side of every edge,
    with a 1e-9 m distance tolerance so boundary points are inclusive.
    """
    inside = np.ones(px.shape[0], dtype=bool)
    k = verts.shape[0]
    for a in range(k):
        b = (a + 1) % k
        ex = verts[b, 0] - verts[a, 0]
        ey = verts[b, 1] - verts[a, 1]
        cross = ex * (py - verts[a, 1]) - ey * (px - verts[a, 0])
        tol = 1e-9 * np.sqrt(ex * ex + ey * ey)
        inside &= cross >= -tol
    return inside
