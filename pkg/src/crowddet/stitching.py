"""Merge per-region candidate lists into one image-level detection set.

Each region's thresholded candidates are matched against the already
accepted boxes under lexicographic (non-intersection, L1 distance) costs.
A matched incoming box that intersects its partner is destroyed; every
accepted box can destroy at most one incoming box per region.
"""

from __future__ import annotations

from fractions import Fraction
from typing import List, Sequence, Tuple

from .data import Detection
from .decoder import RegionPrediction, threshold_cutoff
from .geometry import BoxGeometry, intersects, l1_distance
from .matching import Candidate, min_cost_assignment

NULL_COST = (1, Fraction(0))


def surviving_incoming(
    accepted: Sequence[BoxGeometry], incoming: Sequence[BoxGeometry]
) -> List[int]:
    """Indices of incoming boxes that are not destroyed by the accepted set.

    Both sides are padded to a square instance with null nodes of cost
    (1, 0) so the matching is total; minimizing the summed cost maximizes
    the number of matched intersecting pairs, i.e. destruction.
    """
    if not incoming:
        return []
    if not accepted:
        return list(range(len(incoming)))
    n = max(len(accepted), len(incoming))

    def cost(i: int, j: int):
        if i >= len(accepted) or j >= len(incoming):
            return NULL_COST
        a, b = accepted[i], incoming[j]
        return (0 if intersects(a, b) else 1, Fraction(l1_distance(a, b)))

    matrix = [[cost(i, j) for j in range(n)] for i in range(n)]
    row_to_col = min_cost_assignment(matrix)
    destroyed = set()
    for i, j in enumerate(row_to_col):
        if i < len(accepted) and j < len(incoming) and intersects(accepted[i], incoming[j]):
            destroyed.add(j)
    return [j for j in range(len(incoming)) if j not in destroyed]


def stitch_step(
    accepted: Sequence[BoxGeometry], incoming: Sequence[Candidate]
) -> List[BoxGeometry]:
    """One merge iteration: returns the accepted set extended by surviving
    incoming boxes, in incoming emission order."""
    geoms = [c.geometry for c in incoming]
    keep = surviving_incoming(accepted, geoms)
    return list(accepted) + [geoms[j] for j in keep]


def stitch_image(
    region_predictions: Sequence[RegionPrediction], threshold: float = 0.5
) -> List[Detection]:
    """Fold the merge step over regions in the given (row-major) order.

    Candidates are thresholded per region, shifted into image-absolute
    coordinates, and merged. Output carries confidences and provenance.
    """
    accepted_geoms: List[BoxGeometry] = []
    detections: List[Detection] = []
    for region_index, prediction in enumerate(region_predictions):
        ox, oy = prediction.region_origin
        kept = threshold_cutoff(prediction, threshold)
        absolute: List[Tuple[BoxGeometry, Candidate]] = [
            (BoxGeometry(c.geometry.x + ox, c.geometry.y + oy, c.geometry.w, c.geometry.h), c)
            for c in kept
        ]
        keep = surviving_incoming(accepted_geoms, [g for g, _ in absolute])
        for j in keep:
            geom, cand = absolute[j]
            accepted_geoms.append(geom)
            detections.append(
                Detection(
                    geometry=geom,
                    confidence=cand.confidence,
                    rank=cand.rank,
                    region_index=region_index,
                )
            )
    return detections
