"""Synthetic forest and point-cloud generation with exact ground truth.

Stands place trees on a jittered grid (or uniformly at random), sample
crown surfaces at per-story densities, and thin ground returns under the
canopy with the same layer-fraction model, so realized story fractions
track the configured ones. Every vegetation point is labeled with its tree
and story, giving the oracle data the accuracy suites need.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (CLASS_GROUND, CLASS_VEGETATION, Dem, Extent, PointCloud,
                   RasterGrid)
from .errors import ForestSpecError
from .evaluation import StemRecord
from .occlusion import LogSeriesModel, log_series_pmf

CROWN_SHAPES = ("cone", "ellipsoid", "hemisphere")
RELIEFS = ("flat", "slope", "wave")

# crown class assigned per story ordinal
_STORY_CLASS = {1: "dominant", 2: "intermediate"}


@dataclass
class StandSpec:
    """One cohort of trees sharing a story and shape family."""

    n_trees: int = 0
    trees_per_ha: float = 0.0          # alternative to n_trees
    height_range: Tuple[float, float] = (15.0, 25.0)
    crown_shape: str = "cone"
    crown_ratio_range: Tuple[float, float] = (0.5, 0.7)
    crown_radius_range: Tuple[float, float] = (2.0, 3.5)
    story: int = 1
    placement: str = "grid"            # "grid" (jittered) or "poisson"
    jitter: float = 0.0                # meters of uniform jitter per axis
    margin: float = 4.0                # keep-out belt inside the extent

    def resolve_count(self, area_m2: float) -> int:
        if self.n_trees:
            return self.n_trees
        return int(round(self.trees_per_ha * area_m2 / 10_000.0))


@dataclass
class ForestSpec:
    extent: Extent
    stands: List[StandSpec]
    pulse_density: float = 10.0
    layer_fractions: Optional[List[float]] = None  # explicit p_n per story
    theta: Optional[float] = None                  # log-series alternative
    noise_sigma: float = 0.0
    seed: int = 0
    relief: str = "flat"
    base_elevation: float = 100.0
    relief_amplitude: float = 0.0
    dem_resolution: float = 1.0
    ground_returns: bool = True    # False: vegetation-only cloud (pre-classified)

    def validate(self) -> None:
        if self.extent.area <= 0:
            raise ForestSpecError("extent area must be positive")
        if self.pulse_density <= 0:
            raise ForestSpecError("pulse density must be positive")
        if not self.stands:
            raise ForestSpecError("at least one stand is required")
        if self.relief not in RELIEFS:
            raise ForestSpecError(f"unknown relief {self.relief!r}")
        for s in self.stands:
            if s.crown_shape not in CROWN_SHAPES:
                raise ForestSpecError(f"unknown crown shape {s.crown_shape!r}")
            if s.story < 1:
                raise ForestSpecError("story ordinals start at 1")
            if s.height_range[0] <= 0 or s.height_range[1] < s.height_range[0]:
                raise ForestSpecError("bad height range")
        if self.layer_fractions is not None:
            if any(f < 0 for f in self.layer_fractions):
                raise ForestSpecError("layer fractions must be non-negative")
            if sum(self.layer_fractions) > 1.0 + 1e-9:
                raise ForestSpecError("layer fractions must sum to at most 1")
        elif self.theta is not None:
            if not 0.0 < self.theta < 1.0:
                raise ForestSpecError("theta must lie in (0, 1)")
        else:
            raise ForestSpecError("either layer_fractions or theta is required")

    def story_fraction(self, story: int) -> float:
        if self.layer_fractions is not None:
            if story > len(self.layer_fractions):
                raise ForestSpecError(f"no fraction configured for story {story}")
            return self.layer_fractions[story - 1]
        return log_series_pmf(LogSeriesModel(self.theta), story)


@dataclass
class GroundTruth:
    """Stem map plus per-point (tree, story) labels aligned with the cloud's
    point ids; ground returns carry label 0."""

    stems: List[StemRecord]
    tree_ids: np.ndarray
    stories: np.ndarray

    def story_of_stem(self) -> Dict[int, int]:
        return {s.id: _class_story(s.crown_class) for s in self.stems}


def _class_story(crown_class: str) -> int:
    if crown_class in ("dominant", "codominant"):
        return 1
    if crown_class == "intermediate":
        return 2
    return 3


def _story_class(story: int) -> str:
    return _STORY_CLASS.get(story, "overtopped")


@dataclass
class _Tree:
    id: int
    x: float
    y: float
    height: float
    radius: float
    crown_base: float
    shape: str
    story: int


def _surface_height(tree: _Tree, d: np.ndarray) -> np.ndarray:
    """Upper crown surface height at horizontal distance d from the stem."""
    depth = tree.height - tree.crown_base
    frac = np.clip(d / tree.radius, 0.0, 1.0)
    if tree.shape == "cone":
        return tree.height - depth * frac
    if tree.shape == "ellipsoid":
        half = depth / 2.0
        return tree.crown_base + half + half * np.sqrt(1.0 - frac ** 2)
    # hemisphere: spherical cap clipped at the crown base
    r = tree.radius
    return np.maximum(tree.crown_base,
                      tree.height - r + np.sqrt(np.maximum(r * r - d * d, 0.0)))


def _place_trees(spec: ForestSpec, stand: StandSpec, stand_idx: int,
                 rng: np.random.Generator, next_id: int) -> List[_Tree]:
    ext = spec.extent
    count = stand.resolve_count(ext.area)
    if count == 0:
        return []
    m = stand.margin
    xmin, xmax = ext.xmin + m, ext.xmax - m
    ymin, ymax = ext.ymin + m, ext.ymax - m
    if xmax <= xmin or ymax <= ymin:
        raise ForestSpecError("margin leaves no room for trees")

    if stand.placement == "grid":
        ncell = int(math.ceil(math.sqrt(count)))
        sx = (xmax - xmin) / ncell
        sy = (ymax - ymin) / ncell
        centers = [(xmin + (i + 0.5) * sx, ymin + (j + 0.5) * sy)
                   for j in range(ncell) for i in range(ncell)]
        pick = rng.permutation(len(centers))[:count]
        pos = [centers[i] for i in sorted(pick)]
        if stand.jitter > 0:
            off = rng.uniform(-stand.jitter, stand.jitter, size=(count, 2))
        else:
            off = np.zeros((count, 2))
        xs = np.array([p[0] for p in pos]) + off[:, 0]
        ys = np.array([p[1] for p in pos]) + off[:, 1]
    elif stand.placement == "poisson":
        xs = rng.uniform(xmin, xmax, count)
        ys = rng.uniform(ymin, ymax, count)
    else:
        raise ForestSpecError(f"unknown placement {stand.placement!r}")

    trees = []
    for k in range(count):
        h = rng.uniform(*stand.height_range)
        ratio = rng.uniform(*stand.crown_ratio_range)
        radius = rng.uniform(*stand.crown_radius_range)
        trees.append(_Tree(
            id=next_id + k,
            x=float(np.clip(xs[k], xmin, xmax)),
            y=float(np.clip(ys[k], ymin, ymax)),
            height=float(h),
            radius=float(radius),
            crown_base=float(h * (1.0 - ratio)),
            shape=stand.crown_shape,
            story=stand.story,
        ))
    return trees


def _relief(spec: ForestSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    base = spec.base_elevation
    ext = spec.extent
    if spec.relief == "flat" or spec.relief_amplitude == 0.0:
        return np.full(np.shape(x), base, dtype=np.float64)
    if spec.relief == "slope":
        t = (np.asarray(x) - ext.xmin) / max(ext.width, 1e-9)
        return base + spec.relief_amplitude * t
    # wave
    t = 2.0 * np.pi * (np.asarray(x) - ext.xmin) / max(ext.width, 1e-9)
    u = 2.0 * np.pi * (np.asarray(y) - ext.ymin) / max(ext.height, 1e-9)
    return base + spec.relief_amplitude * 0.5 * (np.sin(t) + np.cos(u))


def _analytic_dem(spec: ForestSpec) -> Dem:
    grid = RasterGrid.from_extent(spec.extent, spec.dem_resolution)
    ii, jj = np.meshgrid(np.arange(grid.ncols), np.arange(grid.nrows), indexing="ij")
    cx, cy = grid.cell_center(ii, jj)
    return Dem(grid, _relief(spec, cx, cy))


def _sample_story(spec: ForestSpec, story_trees: List[_Tree], story: int
                  ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Sample the visible (union) surface of one story's crowns.

    Each crown draws its own areal sample at the story density; samples
    shadowed by a higher same-story surface are discarded, so overlap
    regions keep exactly the union-surface density. Cross-story occlusion
    is represented statistically by the per-story fractions, not by
    shadowing. Every tree contributes its exact apex point.
    """
    from scipy.spatial import cKDTree

    frac = spec.story_fraction(story)
    density = frac * spec.pulse_density
    px_l, py_l, pz_l, lab_l = [], [], [], []
    for tree in story_trees:
        n = max(1, int(round(density * math.pi * tree.radius ** 2)))
        trng = np.random.default_rng([spec.seed, 1000 + tree.id])
        d = tree.radius * np.sqrt(trng.random(n - 1)) if n > 1 else np.empty(0)
        ang = 2.0 * np.pi * trng.random(n - 1) if n > 1 else np.empty(0)
        px_l.append(np.concatenate(([tree.x], tree.x + d * np.cos(ang))))
        py_l.append(np.concatenate(([tree.y], tree.y + d * np.sin(ang))))
        pz_l.append(np.concatenate(([tree.height], _surface_height(tree, d))))
        lab_l.append(np.full(n, tree.id, dtype=np.int64))
    px = np.concatenate(px_l)
    py = np.concatenate(py_l)
    pz = np.concatenate(pz_l)
    lab = np.concatenate(lab_l)
    is_apex = np.zeros(px.shape[0], dtype=bool)
    is_apex[np.cumsum([0] + [len(a) for a in lab_l[:-1]])] = True

    shadow = pz.copy()
    if len(story_trees) > 1:
        tree_index = cKDTree(np.column_stack((px, py)))
        for tree in story_trees:
            idx = tree_index.query_ball_point([tree.x, tree.y], tree.radius)
            if not idx:
                continue
            idx = np.asarray(idx, dtype=np.int64)
            d = np.hypot(px[idx] - tree.x, py[idx] - tree.y)
            np.maximum.at(shadow, idx, _surface_height(tree, d))
    keep = is_apex | (pz >= shadow - 1e-9)
    inside = (spec.extent.contains(px, py)) & keep
    return px[inside], py[inside], pz[inside], lab[inside]


def generate_forest(spec: ForestSpec) -> Tuple[PointCloud, Dem, GroundTruth]:
    """Deterministic synthetic cloud, DEM, and truth labels for a spec."""
    spec.validate()

    trees: List[_Tree] = []
    for idx, stand in enumerate(spec.stands):
        stand_rng = np.random.default_rng([spec.seed, idx])
        trees.extend(_place_trees(spec, stand, idx, stand_rng, len(trees) + 1))

    xs: List[np.ndarray] = []
    ys: List[np.ndarray] = []
    zs: List[np.ndarray] = []
    labels: List[np.ndarray] = []
    stories: List[np.ndarray] = []

    stories_present = sorted({t.story for t in trees})
    for story in stories_present:
        story_trees = [t for t in trees if t.story == story]
        px, py, hz, lab = _sample_story(spec, story_trees, story)
        if spec.noise_sigma > 0:
            nrng = np.random.default_rng([spec.seed, 500 + story])
            hz = hz + nrng.normal(0.0, spec.noise_sigma, hz.shape[0])
        xs.append(px)
        ys.append(py)
        zs.append(_relief(spec, px, py) + np.maximum(hz, 0.0))
        labels.append(lab)
        stories.append(np.full(px.shape[0], story, dtype=np.int64))

    if spec.ground_returns:
        # ground candidates thinned by the story fractions covering them
        cover_grid = RasterGrid.from_extent(spec.extent, 0.5)
        cover = np.zeros((len(stories_present), cover_grid.ncols, cover_grid.nrows),
                         dtype=bool)
        for t in trees:
            s_idx = stories_present.index(t.story)
            i0, j0 = cover_grid.cell_index(t.x - t.radius, t.y - t.radius)
            i1, j1 = cover_grid.cell_index(t.x + t.radius, t.y + t.radius)
            ii = np.arange(i0, i1 + 1)
            jj = np.arange(j0, j1 + 1)
            cx, cy = cover_grid.cell_center(*np.meshgrid(ii, jj, indexing="ij"))
            disk = (cx - t.x) ** 2 + (cy - t.y) ** 2 <= t.radius ** 2
            cover[s_idx, i0:i1 + 1, j0:j1 + 1] |= disk

        grng = np.random.default_rng([spec.seed, 2])
        n_cand = int(round(spec.pulse_density * spec.extent.area))
        gx = grng.uniform(spec.extent.xmin, spec.extent.xmax, n_cand)
        gy = grng.uniform(spec.extent.ymin, spec.extent.ymax, n_cand)
        gi, gj = cover_grid.cell_index(gx, gy)
        blocked = np.zeros(n_cand, dtype=np.float64)
        for s_idx, story in enumerate(stories_present):
            blocked += spec.story_fraction(story) * cover[s_idx, gi, gj]
        keep = grng.random(n_cand) < (1.0 - blocked)
        gx, gy = gx[keep], gy[keep]
        gz = _relief(spec, gx, gy)
        xs.append(gx)
        ys.append(gy)
        zs.append(gz)
        labels.append(np.zeros(gx.shape[0], dtype=np.int64))
        stories.append(np.zeros(gx.shape[0], dtype=np.int64))

    x = np.concatenate(xs)
    y = np.concatenate(ys)
    z = np.concatenate(zs)
    tree_ids = np.concatenate(labels)
    story_ids = np.concatenate(stories)
    classes = np.where(tree_ids > 0, CLASS_VEGETATION, CLASS_GROUND).astype(np.uint8)
    cloud = PointCloud.from_arrays(x, y, z, classes=classes, extent=spec.extent)

    stems = [StemRecord(id=t.id, x=t.x, y=t.y, height=t.height,
                        crown_class=_story_class(t.story),
                        dbh=round(1.2 * t.height, 1))
             for t in trees]
    return cloud, _analytic_dem(spec), GroundTruth(stems, tree_ids, story_ids)


def truth_layer_report(truth: GroundTruth, layers) -> np.ndarray:
    """Counts of (true story, assigned layer) over all vegetation points.

    Rows are true stories 1..S; columns are assigned layers 1..L. Points of
    a story that ended up in no layer are simply absent from the row sums.
    """
    n_stories = int(truth.stories.max()) if truth.stories.size else 0
    mat = np.zeros((n_stories, len(layers)), dtype=np.int64)
    story_of = truth.stories
    for col, layer in enumerate(layers):
        ids = layer.points.ids
        s = story_of[ids]
        veg = s > 0
        np.add.at(mat, (s[veg] - 1, col), 1)
    return mat


# ---------------------------------------------------------------------------
# JSON spec file


def spec_to_dict(spec: ForestSpec) -> dict:
    return {
        "extent": [spec.extent.xmin, spec.extent.ymin, spec.extent.xmax, spec.extent.ymax],
        "pulse_density": spec.pulse_density,
        "layer_fractions": spec.layer_fractions,
        "theta": spec.theta,
        "noise_sigma": spec.noise_sigma,
        "seed": spec.seed,
        "relief": spec.relief,
        "base_elevation": spec.base_elevation,
        "relief_amplitude": spec.relief_amplitude,
        "dem_resolution": spec.dem_resolution,
        "stands": [
            {
                "n_trees": s.n_trees,
                "trees_per_ha": s.trees_per_ha,
                "height_range": list(s.height_range),
                "crown_shape": s.crown_shape,
                "crown_ratio_range": list(s.crown_ratio_range),
                "crown_radius_range": list(s.crown_radius_range),
                "story": s.story,
                "placement": s.placement,
                "jitter": s.jitter,
                "margin": s.margin,
            }
            for s in spec.stands
        ],
    }


def spec_from_dict(data: dict) -> ForestSpec:
    try:
        ext = data["extent"]
        stands = [
            StandSpec(
                n_trees=int(s.get("n_trees", 0)),
                trees_per_ha=float(s.get("trees_per_ha", 0.0)),
                height_range=tuple(s.get("height_range", (15.0, 25.0))),
                crown_shape=s.get("crown_shape", "cone"),
                crown_ratio_range=tuple(s.get("crown_ratio_range", (0.5, 0.7))),
                crown_radius_range=tuple(s.get("crown_radius_range", (2.0, 3.5))),
                story=int(s.get("story", 1)),
                placement=s.get("placement", "grid"),
                jitter=float(s.get("jitter", 0.0)),
                margin=float(s.get("margin", 4.0)),
            )
            for s in data["stands"]
        ]
        spec = ForestSpec(
            extent=Extent(*[float(v) for v in ext]),
            stands=stands,
            pulse_density=float(data.get("pulse_density", 10.0)),
            layer_fractions=data.get("layer_fractions"),
            theta=data.get("theta"),
            noise_sigma=float(data.get("noise_sigma", 0.0)),
            seed=int(data.get("seed", 0)),
            relief=data.get("relief", "flat"),
            base_elevation=float(data.get("base_elevation", 100.0)),
            relief_amplitude=float(data.get("relief_amplitude", 0.0)),
            dem_resolution=float(data.get("dem_resolution", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ForestSpecError(f"malformed forest spec: {exc}") from exc
    spec.validate()
    return spec


def load_spec(path) -> ForestSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))


def save_spec(spec: ForestSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
