"""Iterative single-layer tree crown segmentation.

The driver locates the tallest remaining surface point, casts an adaptive
fan of vertical profiles from it, finds the crown boundary along each
profile (gap detection, then local-minimum inspection with slope windows),
hulls the boundary points, and claims everything inside the hull as one
crown. Iterates until no surface points remain, then filters noise and
ground-level clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .core import Point3D, Polygon2D, SurfacePointSet, convex_hull
from .errors import EmptyInputError

MIN_GAP_DELTAS = 8          # fewer along-profile spacings than this: no gap call
MAX_PROFILE_COUNT = 4096    # hard cap on ray doubling


@dataclass
class SegConfig:
    """Tuning knobs for the segmentation driver.

    ``sphere_expected_slope_deg`` is the expected surface slope of a
    sphere-shaped crown and anchors the shallow end of the window
    interpolation; the steep end is ``90 - epsilon_deg``.
    """

    max_profile_distance: float = 20.0
    initial_profiles: int = 8
    mdcw: float = 1.5
    min_tree_height: float = 4.0
    epsilon_deg: float = 5.0
    cl_cone: float = 0.8
    cl_sphere: float = 0.7
    o_cone: float = 2.0 / 3.0
    o_sphere: float = 1.0 / 3.0
    sphere_expected_slope_deg: float = 32.7
    gap_iqr_factor: float = 6.0
    profile_width_factor: float = 2.0
    smoothing_sigma_factor: float = 2.0

    def validate(self) -> None:
        positive = ["max_profile_distance", "initial_profiles", "mdcw",
                    "min_tree_height", "epsilon_deg", "cl_cone", "cl_sphere",
                    "o_cone", "o_sphere", "gap_iqr_factor",
                    "profile_width_factor", "smoothing_sigma_factor"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("cl_cone", "cl_sphere", "o_cone", "o_sphere"):
            if getattr(self, name) > 1:
                raise ValueError(f"{name} must be a ratio in (0, 1]")
        if self.epsilon_deg >= 57.3:
            raise ValueError("epsilon_deg too large for the window interpolation")


@dataclass
class Profile:
    """One vertical profile: surface points ordered by distance from the
    apex along a ray. The first point is always the apex at distance 0."""

    azimuth_deg: float
    distances: np.ndarray
    heights: np.ndarray
    ids: np.ndarray
    width: float

    @property
    def count(self) -> int:
        return int(self.distances.shape[0])

    def truncate(self, last_index: int) -> "Profile":
        """Keep points up to and including ``last_index``."""
        s = slice(0, last_index + 1)
        return Profile(self.azimuth_deg, self.distances[s], self.heights[s],
                       self.ids[s], self.width)


@dataclass
class Crown:
    """A segmented tree crown: apex, hull footprint, and member points."""

    id: int
    apex: Point3D
    hull: Polygon2D
    max_radius: float
    point_ids: np.ndarray
    points_x: np.ndarray
    points_y: np.ndarray
    points_z: np.ndarray
    layer: int = 0

    @property
    def height(self) -> float:
        return self.apex.z

    @property
    def apex_x(self) -> float:
        return self.apex.x

    @property
    def apex_y(self) -> float:
        return self.apex.y

    @property
    def n_points(self) -> int:
        return int(self.point_ids.shape[0])

    @property
    def member_point_ids(self) -> set:
        return set(int(i) for i in self.point_ids)


@dataclass
class SegmentationResult:
    crowns: List[Crown]
    noise_crowns: List[Crown] = field(default_factory=list)
    low_crowns: List[Crown] = field(default_factory=list)
    noise_point_ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))


def find_gmx(lsps: SurfacePointSet) -> Point3D:
    """The highest surface point; ties broken by smallest (x, y)."""
    if lsps.count == 0:
        raise EmptyInputError("no surface points")
    return lsps.point(_gmx_index(lsps.x, lsps.y, lsps.z))


def _gmx_index(x, y, z) -> int:
    best = np.flatnonzero(z == z.max())
    if best.shape[0] > 1:
        sub = np.lexsort((y[best], x[best]))
        return int(best[sub[0]])
    return int(best[0])


def chord_height(r: float, phi_deg: float) -> float:
    """Sagitta of the chord between two rays of length r separated by
    phi degrees."""
    return r * (1.0 - math.cos(math.radians(phi_deg / 2.0)))


def cone_crown_radius(h_ad: float, cfg: SegConfig) -> float:
    """Radius of a narrow cone-shaped crown of a tree with height h_ad,
    reduced for stand overlap."""
    steep = math.tan(math.radians(90.0 - cfg.epsilon_deg))
    return (h_ad * cfg.cl_cone / steep) * cfg.o_cone


def sphere_crown_radius(h_ad: float, cfg: SegConfig) -> float:
    """Radius of a sphere-shaped crown of a tree with height h_ad, reduced
    for stand overlap."""
    return (h_ad * cfg.cl_sphere / 2.0) * cfg.o_sphere


def right_window_width(s_right_deg: float, h_ad: float, cfg: SegConfig) -> float:
    """Window width right of a local minimum, interpolated between the
    sphere-shaped radius (at the expected sphere slope) and the cone-shaped
    radius (at 90 - epsilon) according to the observed slope."""
    lo = cfg.sphere_expected_slope_deg
    hi = 90.0 - cfg.epsilon_deg
    s = min(max(s_right_deg, lo), hi)
    t = (s - lo) / (hi - lo)
    return sphere_crown_radius(h_ad, cfg) * (1.0 - t) + cone_crown_radius(h_ad, cfg) * t


def detect_gap(profile: Profile, cfg: SegConfig) -> Optional[int]:
    """Index of the last point before the first between-tree gap, or None.

    Consecutive along-ray spacings are square-root transformed; the first
    spacing exceeding Q3 + gap_iqr_factor * IQR marks the gap. Profiles
    with fewer than 8 spacings never report one.
    """
    d = profile.distances
    if d.shape[0] < MIN_GAP_DELTAS + 1:
        return None
    deltas = np.sqrt(np.diff(d))
    q1, q3 = np.percentile(deltas, [25.0, 75.0])
    cut = q3 + cfg.gap_iqr_factor * (q3 - q1)
    over = np.flatnonzero(deltas > cut)
    if over.shape[0] == 0:
        return None
    return int(over[0])


def _median_slope(dist, height, lo, hi):
    """Median of consecutive-pair slopes for pair indices [lo, hi)."""
    if hi <= lo:
        return None
    dd = dist[lo + 1:hi + 1] - dist[lo:hi]
    dh = height[lo + 1:hi + 1] - height[lo:hi]
    ok = dd > 0
    if not ok.any():
        return None
    return float(np.median(dh[ok] / dd[ok]))


def identify_boundary(profile: Profile, cfg: SegConfig,
                      afp: float) -> Tuple[int, Tuple[float, float, int]]:
    """Locate the crown boundary point along a gap-trimmed profile.

    Local minima are inspected outward from the apex; one is accepted as
    the boundary when the median slope apex..LM is negative and the median
    slope within the adaptive window right of the LM is positive. Falls
    back to the last point.
    """
    d, h = profile.distances, profile.heights
    m = d.shape[0]
    if m < 3:
        i = m - 1
        return i, (float(d[i]), float(h[i]), int(profile.ids[i]))

    for i in range(1, m - 1):
        if not (h[i] < h[i - 1] and h[i] < h[i + 1]):
            continue
        # steepness from pairs fully inside mdcw right of the LM
        right_end = i
        while right_end + 1 < m and d[right_end + 1] <= d[i] + cfg.mdcw:
            right_end += 1
        n_pairs = right_end - i
        if n_pairs >= 2:
            dd = d[i + 1:right_end + 1] - d[i:right_end]
            dh = h[i + 1:right_end + 1] - h[i:right_end]
            ok = dd > 0
            if ok.sum() >= 2:
                s_right = math.degrees(math.atan(float(np.median(np.abs(dh[ok] / dd[ok])))))
            else:
                s_right = cfg.sphere_expected_slope_deg
        else:
            s_right = cfg.sphere_expected_slope_deg
        h_ad = (h[0] + h[i]) / 2.0
        window = right_window_width(s_right, h_ad, cfg)

        left = _median_slope(d, h, 0, i)
        if left is None or left >= 0:
            continue
        # pairs among points strictly right of the LM, within the window
        w_end = i
        while w_end + 1 < m and d[w_end + 1] <= d[i] + window:
            w_end += 1
        right = _median_slope(d, h, i + 1, w_end)
        if right is not None and right > 0:
            return i, (float(d[i]), float(h[i]), int(profile.ids[i]))

    i = m - 1
    return i, (float(d[i]), float(h[i]), int(profile.ids[i]))


def _build_profiles(gx, gy, gz, gid, px, py, pz, pids, count, width, cfg):
    """Assign candidate points to their nearest qualifying ray of a fan of
    ``count`` rays; the apex opens every profile at distance 0."""
    phi = 360.0 / count
    profiles = []
    if px.shape[0]:
        dx = px - gx
        dy = py - gy
        dist = np.hypot(dx, dy)
        az = np.degrees(np.arctan2(dy, dx)) % 360.0
        ray = np.rint(az / phi).astype(np.int64) % count
        d_az = (az - ray * phi + 180.0) % 360.0 - 180.0
        rad = np.radians(d_az)
        along = dist * np.cos(rad)
        perp = dist * np.abs(np.sin(rad))
        ok = (perp <= width / 2.0) & (along > 0.0) & (along <= cfg.max_profile_distance)
        ray, along, perp = ray[ok], along[ok], perp[ok]
        keep_z, keep_ids = pz[ok], pids[ok]
        order = np.lexsort((perp, along, ray))
        ray, along = ray[order], along[order]
        keep_z, keep_ids = keep_z[order], keep_ids[order]
    else:
        ray = np.empty(0, np.int64)
        along = keep_z = np.empty(0, np.float64)
        keep_ids = np.empty(0, np.int64)

    for k in range(count):
        sel = ray == k
        d_k = along[sel]
        z_k = keep_z[sel]
        id_k = keep_ids[sel]
        if d_k.shape[0]:
            # enforce strictly increasing distances (first of any duplicate wins)
            uniq = np.flatnonzero(np.diff(d_k, prepend=-1.0) > 0)
            d_k, z_k, id_k = d_k[uniq], z_k[uniq], id_k[uniq]
        profiles.append(Profile(
            azimuth_deg=k * phi,
            distances=np.concatenate(([0.0], d_k)),
            heights=np.concatenate(([gz], z_k)),
            ids=np.concatenate(([gid], id_k)).astype(np.int64),
            width=width,
        ))
    return profiles


def _profiles_with_boundaries(gx, gy, gz, gid, px, py, pz, pids, afp, cfg):
    """Adaptive fan: double the ray count until the chord height at the
    maximum boundary radius falls to the average footprint or below."""
    width = cfg.profile_width_factor * afp
    count = cfg.initial_profiles
    while True:
        profiles = _build_profiles(gx, gy, gz, gid, px, py, pz, pids, count, width, cfg)
        boundaries = []
        for p in profiles:
            gap = detect_gap(p, cfg)
            trimmed = p.truncate(gap) if gap is not None else p
            boundaries.append((trimmed, *identify_boundary(trimmed, cfg, afp)))
        r = max(b[2][0] for b in boundaries)
        if chord_height(r, 360.0 / count) > afp and count < MAX_PROFILE_COUNT:
            count *= 2
            continue
        return profiles, boundaries, count


def generate_profiles(gmx: Point3D, lsps: SurfacePointSet, cfg: SegConfig) -> List[Profile]:
    """The final adaptive fan of profiles around an apex."""
    sel = ~((lsps.x == gmx.x) & (lsps.y == gmx.y))
    profiles, _, _ = _profiles_with_boundaries(
        gmx.x, gmx.y, gmx.z, gmx.id,
        lsps.x[sel], lsps.y[sel], lsps.z[sel], lsps.ids[sel],
        lsps.afp, cfg)
    return profiles


def segment_trees(lsps: SurfacePointSet, cfg: Optional[SegConfig] = None) -> List[Crown]:
    """Segment every surface point into tree crowns; see module docstring."""
    return segment_trees_detailed(lsps, cfg).crowns


def segment_trees_detailed(lsps: SurfacePointSet,
                           cfg: Optional[SegConfig] = None) -> SegmentationResult:
    """Like :func:`segment_trees` but keeps the discarded clusters for
    accounting: sub-width noise crowns, crowns entirely below the minimum
    tree height, and single-point noise."""
    cfg = cfg or SegConfig()
    cfg.validate()
    n = lsps.count
    result = SegmentationResult(crowns=[])
    if n == 0:
        return result

    x, y, z, ids = lsps.x, lsps.y, lsps.z, lsps.ids
    afp = lsps.afp
    claimed = np.zeros(n, dtype=bool)
    tree = cKDTree(np.column_stack((x, y)))
    # height-descending visit order with the (x, y) tie rule
    order = np.lexsort((y, x, -z))
    ptr = 0
    all_crowns: List[Crown] = []
    noise_ids: List[np.ndarray] = []

    while ptr < n:
        if claimed[order[ptr]]:
            ptr += 1
            continue
        g = int(order[ptr])
        cand = np.asarray(tree.query_ball_point([x[g], y[g]],
                                                cfg.max_profile_distance), dtype=np.int64)
        cand = cand[~claimed[cand]]
        cand = cand[cand != g]

        # profiles internally carry array indices in place of point ids so
        # boundary points map straight back to coordinates
        _, boundaries, _ = _profiles_with_boundaries(
            x[g], y[g], z[g], g,
            x[cand], y[cand], z[cand], cand, afp, cfg)

        bnd_idx = np.unique([b[2][2] for b in boundaries]).astype(np.int64)
        hull = convex_hull(np.column_stack((x[bnd_idx], y[bnd_idx])))

        if hull.degenerate:
            # claim a minimum-width disk around the apex
            radius = cfg.mdcw / 2.0
            d2 = (x[cand] - x[g]) ** 2 + (y[cand] - y[g]) ** 2
            members = cand[d2 <= radius * radius]
            if members.shape[0] == 0:
                claimed[g] = True
                noise_ids.append(ids[g:g + 1])
                continue
            members = np.concatenate((members, [g]))
            max_radius = radius
        else:
            inside = hull.contains(x[cand], y[cand])
            members = np.concatenate((cand[inside], [g]))
            max_radius = float(np.hypot(hull.vertices[:, 0] - x[g],
                                        hull.vertices[:, 1] - y[g]).max())

        claimed[members] = True
        members = members[np.argsort(ids[members])]
        all_crowns.append(Crown(
            id=len(all_crowns) + 1,
            apex=Point3D(float(x[g]), float(y[g]), float(z[g]), id=int(ids[g])),
            hull=hull,
            max_radius=max_radius,
            point_ids=ids[members].copy(),
            points_x=x[members].copy(),
            points_y=y[members].copy(),
            points_z=z[members].copy(),
        ))

    for crown in all_crowns:
        diameter = crown.hull.diameter() if not crown.hull.degenerate else float(
            np.hypot(crown.points_x[:, None] - crown.points_x[None, :],
                     crown.points_y[:, None] - crown.points_y[None, :]).max())
        if diameter < cfg.mdcw:
            result.noise_crowns.append(crown)
        elif crown.points_z.max() < cfg.min_tree_height:
            result.low_crowns.append(crown)
        else:
            crown.id = len(result.crowns) + 1
            result.crowns.append(crown)
    if noise_ids:
        result.noise_point_ids = np.concatenate(noise_ids)
    return result
