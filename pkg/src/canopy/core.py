"""Point-cloud primitives shared by the whole toolkit.

Grids, DEM height normalization, surface-point extraction, Gaussian
smoothing, and the 2D geometry helpers. Clouds are stored as numpy
struct-of-arrays; per-point integer ids survive every subsetting operation
so downstream modules can trace points back to their source.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import EmptyInputError

log = logging.getLogger(__name__)

# ASPRS-style class codes used throughout the text formats
CLASS_UNCLASSIFIED = 0
CLASS_GROUND = 2
CLASS_VEGETATION = 5

FRAME_ABSOLUTE = "absolute"
FRAME_ABOVE_GROUND = "above_ground"

# unclassified returns below this height above ground count as ground returns
GROUND_EPSILON = 0.1


class Point3D(NamedTuple):
    x: float
    y: float
    z: float
    cls: int = CLASS_UNCLASSIFIED
    id: int = -1


@dataclass(frozen=True)
class Extent:
    """Axis-aligned 2D bounding box in planar meters."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, x, y):
        return (x >= self.xmin) & (x <= self.xmax) & (y >= self.ymin) & (y <= self.ymax)

    def buffered(self, pad: float) -> "Extent":
        return Extent(self.xmin - pad, self.ymin - pad, self.xmax + pad, self.ymax + pad)


def _as_f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


@dataclass
class PointCloud:
    """A set of 3D returns with class codes and stable point ids.

    ``height_frame`` records whether ``z`` is absolute elevation or height
    above ground; operations that require one frame check it.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    cls: np.ndarray
    ids: np.ndarray
    extent: Extent
    height_frame: str = FRAME_ABSOLUTE

    @classmethod
    def from_arrays(cls, x, y, z, classes=None, ids=None, extent=None,
                    height_frame=FRAME_ABSOLUTE) -> "PointCloud":
        x, y, z = _as_f64(x), _as_f64(y), _as_f64(z)
        n = x.shape[0]
        if classes is None:
            classes = np.full(n, CLASS_UNCLASSIFIED, dtype=np.uint8)
        else:
            classes = np.ascontiguousarray(classes, dtype=np.uint8)
        if ids is None:
            ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.ascontiguousarray(ids, dtype=np.int64)
        if extent is None:
            if n == 0:
                extent = Extent(0.0, 0.0, 0.0, 0.0)
            else:
                extent = Extent(float(x.min()), float(y.min()),
                                float(x.max()), float(y.max()))
        return cls(x, y, z, classes, ids, extent, height_frame)

    @property
    def count(self) -> int:
        return int(self.x.shape[0])

    def subset(self, sel) -> "PointCloud":
        """New cloud with the selected points; extent and frame are kept."""
        return PointCloud(self.x[sel], self.y[sel], self.z[sel], self.cls[sel],
                          self.ids[sel], self.extent, self.height_frame)

    def point(self, i: int) -> Point3D:
        return Point3D(float(self.x[i]), float(self.y[i]), float(self.z[i]),
                       int(self.cls[i]), int(self.ids[i]))


@dataclass
class SurfacePointSet:
    """Highest return per grid cell, above ground, ground returns removed.

    ``afp`` is the grid cell width used at extraction time (the average
    footprint of the source cloud).
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    ids: np.ndarray
    afp: float

    @property
    def count(self) -> int:
        return int(self.x.shape[0])

    def subset(self, sel) -> "SurfacePointSet":
        return SurfacePointSet(self.x[sel], self.y[sel], self.z[sel],
                               self.ids[sel], self.afp)

    def point(self, i: int) -> Point3D:
        return Point3D(float(self.x[i]), float(self.y[i]), float(self.z[i]),
                       CLASS_VEGETATION, int(self.ids[i]))


@dataclass(frozen=True)
class RasterGrid:
    """Cell-indexed binning grid over an extent.

    Cell assignment is half-open: a point on a shared border belongs to the
    cell with the larger index, and indices clamp at the far extent edge so
    the mapping is total.
    """

    origin_x: float
    origin_y: float
    cell_width: float
    ncols: int
    nrows: int

    @classmethod
    def from_extent(cls, extent: Extent, cell_width: float) -> "RasterGrid":
        if cell_width <= 0:
            raise ValueError("cell_width must be positive")
        ncols = max(1, int(np.ceil(extent.width / cell_width)))
        nrows = max(1, int(np.ceil(extent.height / cell_width)))
        return cls(extent.xmin, extent.ymin, cell_width, ncols, nrows)

    def cell_index(self, x, y):
        i = np.clip(((np.asarray(x) - self.origin_x) // self.cell_width).astype(np.int64),
                    0, self.ncols - 1)
        j = np.clip(((np.asarray(y) - self.origin_y) // self.cell_width).astype(np.int64),
                    0, self.nrows - 1)
        return i, j

    def flat_index(self, x, y):
        i, j = self.cell_index(x, y)
        return i * self.nrows + j

    def cell_center(self, i, j):
        cx = self.origin_x + (np.asarray(i) + 0.5) * self.cell_width
        cy = self.origin_y + (np.asarray(j) + 0.5) * self.cell_width
        return cx, cy

    @property
    def ncells(self) -> int:
        return self.ncols * self.nrows


@dataclass
class Dem:
    """Ground elevation raster; voids are filled at construction time.

    ``values`` is indexed [column, row] with the row axis increasing
    northward. Queries are bilinear between cell centers and clamp to the
    nearest cell outside the extent.
    """

    grid: RasterGrid
    values: np.ndarray
    nodata: float = -9999.0

    @property
    def resolution(self) -> float:
        return self.grid.cell_width

    def elevation(self, x, y):
        """Interpolated ground elevation; arrays in, array out."""
        g = self.grid
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        gx = (x - g.origin_x) / g.cell_width - 0.5
        gy = (y - g.origin_y) / g.cell_width - 0.5
        if g.ncols == 1:
            i0 = np.zeros(x.shape, dtype=np.int64)
            fx = np.zeros(x.shape)
            i1 = i0
        else:
            i0 = np.clip(np.floor(gx).astype(np.int64), 0, g.ncols - 2)
            fx = np.clip(gx - i0, 0.0, 1.0)
            i1 = i0 + 1
        if g.nrows == 1:
            j0 = np.zeros(y.shape, dtype=np.int64)
            fy = np.zeros(y.shape)
            j1 = j0
        else:
            j0 = np.clip(np.floor(gy).astype(np.int64), 0, g.nrows - 2)
            fy = np.clip(gy - j0, 0.0, 1.0)
            j1 = j0 + 1
        v = self.values
        top = v[i0, j0] * (1 - fx) + v[i1, j0] * fx
        bot = v[i0, j1] * (1 - fx) + v[i1, j1] * fx
        return top * (1 - fy) + bot * fy

    def outside(self, x, y):
        g = self.grid
        xmax = g.origin_x + g.ncols * g.cell_width
        ymax = g.origin_y + g.nrows * g.cell_width
        return (x < g.origin_x) | (x > xmax) | (y < g.origin_y) | (y > ymax)


@dataclass
class Polygon2D:
    """Ordered polygon; convex hulls are counterclockwise with no three
    collinear vertices. Degenerate hulls (<3 distinct or collinear input)
    keep their chain of points and set the flag."""

    vertices: np.ndarray
    convex: bool = True
    degenerate: bool = False

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    def area(self) -> float:
        if self.degenerate or self.n_vertices < 3:
            return 0.0
        vx = self.vertices[:, 0]
        vy = self.vertices[:, 1]
        return float(0.5 * abs(np.dot(vx, np.roll(vy, -1)) - np.dot(vy, np.roll(vx, -1))))

    def diameter(self) -> float:
        """Maximum pairwise vertex distance."""
        v = self.vertices
        if v.shape[0] < 2:
            return 0.0
        d2 = ((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=2)
        return float(np.sqrt(d2.max()))

    def contains(self, px, py):
        """Inside-or-on membership; degenerate polygons contain nothing."""
        px = np.atleast_1d(np.asarray(px, dtype=np.float64))
        py = np.atleast_1d(np.asarray(py, dtype=np.float64))
        if self.degenerate or self.n_vertices < 3:
            return np.zeros(px.shape[0], dtype=bool)
        return _kernels.points_in_convex_polygon(px, py, self.vertices)

    def boundary_distance(self, x: float, y: float) -> float:
        """Distance from a point to the polygon outline (0 if on it)."""
        v = self.vertices
        if v.shape[0] == 1:
            return float(np.hypot(x - v[0, 0], y - v[0, 1]))
        best = np.inf
        for a in range(v.shape[0]):
            b = (a + 1) % v.shape[0]
            best = min(best, _point_segment_distance(x, y, v[a], v[b]))
        return float(best)

    def centroid(self):
        return float(self.vertices[:, 0].mean()), float(self.vertices[:, 1].mean())


def _point_segment_distance(x, y, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    l2 = dx * dx + dy * dy
    if l2 == 0.0:
        return np.hypot(x - ax, y - ay)
    t = np.clip(((x - ax) * dx + (y - ay) * dy) / l2, 0.0, 1.0)
    return np.hypot(x - (ax + t * dx), y - (ay + t * dy))


def regular_polygon(cx: float, cy: float, radius: float, n: int = 64) -> Polygon2D:
    """Counterclockwise regular polygon approximating a circle."""
    ang = 2.0 * np.pi * np.arange(n) / n
    verts = np.column_stack((cx + radius * np.cos(ang), cy + radius * np.sin(ang)))
    return Polygon2D(verts, convex=True, degenerate=False)


# ---------------------------------------------------------------------------
# operations


def point_density(cloud: PointCloud) -> float:
    """Points per square meter over the cloud extent."""
    if cloud.count == 0:
        raise EmptyInputError("point density of an empty cloud is undefined")
    area = cloud.extent.area
    if area <= 0:
        raise ValueError("cloud extent has zero area")
    return cloud.count / area


def compute_afp(cloud: PointCloud) -> float:
    """Average footprint: reciprocal square root of the point density."""
    return 1.0 / np.sqrt(point_density(cloud))


def normalize_heights(cloud: PointCloud, dem: Dem) -> PointCloud:
    """Convert absolute elevations to heights above ground.

    Heights are clamped at 0. Points outside the DEM extent use the nearest
    cell elevation; their count is logged as a warning.
    """
    if cloud.height_frame != FRAME_ABSOLUTE:
        raise ValueError("cloud is already height-normalized")
    if cloud.count == 0:
        return PointCloud(cloud.x, cloud.y, cloud.z, cloud.cls, cloud.ids,
                          cloud.extent, FRAME_ABOVE_GROUND)
    ground = dem.elevation(cloud.x, cloud.y)
    n_out = int(dem.outside(cloud.x, cloud.y).sum())
    if n_out:
        log.warning("%d points outside DEM extent; used nearest-cell elevation", n_out)
    z = np.maximum(cloud.z - ground, 0.0)
    return PointCloud(cloud.x.copy(), cloud.y.copy(), z, cloud.cls.copy(),
                      cloud.ids.copy(), cloud.extent, FRAME_ABOVE_GROUND)


def extract_lsps(cloud: PointCloud, cell_width: float) -> SurfacePointSet:
    """Highest point per grid cell, then drop ground returns.

    Ground removal happens after the per-cell max selection, so a cell whose
    top return is ground becomes a gap.
    """
    if cloud.height_frame != FRAME_ABOVE_GROUND:
        raise ValueError("surface extraction requires above-ground heights")
    if cell_width <= 0:
        raise ValueError("cell_width must be positive")
    if cloud.count == 0:
        return SurfacePointSet(cloud.x, cloud.y, cloud.z, cloud.ids, cell_width)
    grid = RasterGrid.from_extent(cloud.extent, cell_width)
    cells = grid.flat_index(cloud.x, cloud.y)
    order = np.lexsort((cloud.z, cells))
    cells_sorted = cells[order]
    last_of_cell = np.flatnonzero(np.diff(cells_sorted, append=-1) != 0)
    top = order[last_of_cell]
    keep = (cloud.cls[top] != CLASS_GROUND) & (cloud.z[top] >= GROUND_EPSILON)
    top = top[keep]
    return SurfacePointSet(cloud.x[top].copy(), cloud.y[top].copy(),
                           cloud.z[top].copy(), cloud.ids[top].copy(), cell_width)


def gaussian_smooth(lsps: SurfacePointSet, sigma: float) -> SurfacePointSet:
    """Replace each height by the Gaussian-weighted mean of neighbors
    within 3*sigma; positions and point count are unchanged."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    z = _kernels.smooth_heights(lsps.x, lsps.y, lsps.z, float(sigma))
    return SurfacePointSet(lsps.x, lsps.y, z, lsps.ids, lsps.afp)


def convex_hull(points) -> Polygon2D:
    """Minimal convex polygon containing the input points (monotone chain).

    Fewer than 3 distinct points, or all-collinear input, yield a flagged
    degenerate polygon holding the reduced chain.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise EmptyInputError("convex hull of no points")
    uniq = np.unique(pts, axis=0)  # sorts lexicographically by (x, y)
    if uniq.shape[0] < 3:
        return Polygon2D(uniq, convex=True, degenerate=True)

    def half_chain(p):
        chain = []
        for q in p:
            while len(chain) >= 2:
                o, a = chain[-2], chain[-1]
                if (a[0] - o[0]) * (q[1] - o[1]) - (a[1] - o[1]) * (q[0] - o[0]) <= 1e-12:
                    chain.pop()
                else:
                    break
            chain.append(q)
        return chain

    lower = half_chain(uniq)
    upper = half_chain(uniq[::-1])
    verts = np.array(lower[:-1] + upper[:-1])
    if verts.shape[0] < 3:
        # all input points collinear
        ends = np.array([uniq[0], uniq[-1]])
        return Polygon2D(ends, convex=True, degenerate=True)
    return Polygon2D(verts, convex=True, degenerate=False)


def build_dem(ground_points: PointCloud, resolution: float) -> Dem:
    """Average ground elevation per cell; voids filled from the nearest
    populated cell."""
    if ground_points.count == 0:
        raise EmptyInputError("cannot build a DEM from zero ground points")
    grid = RasterGrid.from_extent(ground_points.extent, resolution)
    i, j = grid.cell_index(ground_points.x, ground_points.y)
    flat = i * grid.nrows + j
    sums = np.bincount(flat, weights=ground_points.z, minlength=grid.ncells)
    counts = np.bincount(flat, minlength=grid.ncells)
    values = np.full(grid.ncells, np.nan)
    filled = counts > 0
    values[filled] = sums[filled] / counts[filled]
    values = values.reshape(grid.ncols, grid.nrows)
    if not filled.all():
        # nearest-neighbor void fill via distance transform indices
        void = np.isnan(values)
        idx = ndimage.distance_transform_edt(void, return_distances=False,
                                             return_indices=True)
        values = values[tuple(idx)]
    return Dem(grid, values)
