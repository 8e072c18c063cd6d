"""Segmentation accuracy scoring against ground-truth stem maps.

Crown/stem pairs pass two gates (relative height difference below 30%,
apex lean below 15 degrees from nadir), get a score, and the optimal
one-to-one assignment over all eligible pairs is solved exactly. Counts of
matched, omitted, and committed trees feed recall / precision / F-score.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import math

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Polygon2D
from .errors import InvalidRecordError, NotEligibleError

CROWN_CLASSES = ("dominant", "codominant", "intermediate", "overtopped",
                 "dead", "unknown")

MAX_HEIGHT_RATIO = 0.30   # |crown height - stem height| / stem height
MAX_LEAN_DEG = 15.0       # angle between apex and stem foot, from nadir
DEFAULT_BUFFER = 4.7      # meters of plot buffer excluded from commissions


@dataclass
class StemRecord:
    id: int
    x: float
    y: float
    height: float
    crown_class: str = "unknown"
    dbh: Optional[float] = None


@dataclass
class MatchResult:
    """Outcome of the optimal assignment.

    Every crown and stem appears exactly once across the buckets, so
    MT + OE equals the stem count and MT + CE + buffer-excluded equals the
    crown count.
    """

    pairs: List[Tuple[int, int, float]] = field(default_factory=list)
    omissions: List[int] = field(default_factory=list)
    commissions: List[int] = field(default_factory=list)
    buffer_excluded: List[int] = field(default_factory=list)

    @property
    def mt(self) -> int:
        return len(self.pairs)

    @property
    def oe(self) -> int:
        return len(self.omissions)

    @property
    def ce(self) -> int:
        return len(self.commissions)

    @property
    def total_score(self) -> float:
        return sum(p[2] for p in self.pairs)


def _lean_deg(crown, stem: StemRecord) -> float:
    dist = math.hypot(crown.apex_x - stem.x, crown.apex_y - stem.y)
    return math.degrees(math.atan2(dist, crown.height))


def pair_eligible(crown, stem: StemRecord) -> bool:
    """Both gates, strict: relative height difference < 30% and lean < 15
    degrees."""
    if stem.height <= 0:
        raise InvalidRecordError(f"stem {stem.id} has non-positive height")
    if abs(crown.height - stem.height) / stem.height >= MAX_HEIGHT_RATIO:
        return False
    return _lean_deg(crown, stem) < MAX_LEAN_DEG


def pair_score(crown, stem: StemRecord, height_weight: float = 0.5,
               angle_weight: float = 0.5) -> float:
    """Score in (0, 1]: 1 minus the weighted normalized deviations.

    Both deviations are normalized by their eligibility limits, so any
    eligible pair scores strictly above 0 and a coincident pair scores 1.
    """
    if not pair_eligible(crown, stem):
        raise NotEligibleError(
            f"crown {crown.id} / stem {stem.id} fails the matching gates")
    h_dev = abs(crown.height - stem.height) / (MAX_HEIGHT_RATIO * stem.height)
    a_dev = _lean_deg(crown, stem) / MAX_LEAN_DEG
    return 1.0 - height_weight * h_dev - angle_weight * a_dev


def match_trees(crowns: Sequence, stems: Sequence[StemRecord],
                plot: Polygon2D, buffer: float = DEFAULT_BUFFER) -> MatchResult:
    """Maximum-total-score one-to-one assignment over eligible pairs.

    Unmatched stems are omissions. Unmatched crowns with their apex inside
    the plot are commissions; apexes outside the plot fall in the buffer
    bucket and are excluded from the error counts.
    """
    result = MatchResult()
    nc, ns = len(crowns), len(stems)
    if nc and ns:
        scores = np.zeros((nc, ns))
        for i, crown in enumerate(crowns):
            for j, stem in enumerate(stems):
                if pair_eligible(crown, stem):
                    scores[i, j] = pair_score(crown, stem)
        rows, cols = linear_sum_assignment(scores, maximize=True)
        matched_c, matched_s = set(), set()
        for i, j in zip(rows, cols):
            if scores[i, j] > 0.0:
                result.pairs.append((crowns[i].id, stems[j].id, float(scores[i, j])))
                matched_c.add(i)
                matched_s.add(j)
    else:
        matched_c, matched_s = set(), set()

    result.omissions = [s.id for j, s in enumerate(stems) if j not in matched_s]
    for i, crown in enumerate(crowns):
        if i in matched_c:
            continue
        if bool(plot.contains(crown.apex_x, crown.apex_y)[0]):
            result.commissions.append(crown.id)
        else:
            result.buffer_excluded.append(crown.id)
    return result


def metrics(result: MatchResult) -> Tuple[float, float, float]:
    """(recall, precision, f_score); zero denominators yield zeros."""
    mt, oe, ce = result.mt, result.oe, result.ce
    recall = mt / (mt + oe) if mt + oe else 0.0
    precision = mt / (mt + ce) if mt + ce else 0.0
    f = 2.0 * recall * precision / (recall + precision) if recall + precision else 0.0
    return recall, precision, f


def class_breakdown(result: MatchResult, stems: Sequence[StemRecord]
                    ) -> Dict[str, Tuple[int, int, int, float, float, float]]:
    """Per-crown-class rows of (MT, OE, CE, recall, precision, f).

    Commission errors carry no stem class, so class rows count CE as 0 and
    their precision degenerates; the 'all' row carries the true precision.
    """
    stem_class = {s.id: s.crown_class for s in stems}
    matched_by_class: Dict[str, int] = {}
    for _, sid, _ in result.pairs:
        c = stem_class.get(sid, "unknown")
        matched_by_class[c] = matched_by_class.get(c, 0) + 1
    omitted_by_class: Dict[str, int] = {}
    for sid in result.omissions:
        c = stem_class.get(sid, "unknown")
        omitted_by_class[c] = omitted_by_class.get(c, 0) + 1

    rows: Dict[str, Tuple[int, int, int, float, float, float]] = {}
    for cls in CROWN_CLASSES:
        mt = matched_by_class.get(cls, 0)
        oe = omitted_by_class.get(cls, 0)
        if mt + oe == 0:
            continue
        sub = MatchResult(pairs=[(0, 0, 1.0)] * mt, omissions=[0] * oe)
        rows[cls] = (mt, oe, 0) + metrics(sub)
    rows["all"] = (result.mt, result.oe, result.ce) + metrics(result)
    return rows
