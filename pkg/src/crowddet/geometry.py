"""Axis-aligned box geometry in center/width/height form.

All predicates and distances used by matching, stitching, and evaluation
live here. Boxes are kept in (x, y, w, h) center form and converted to
corner form only inside area computations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoxGeometry:
    """One bounding box: center (x, y) plus width and height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def validate(self) -> "BoxGeometry":
        """Raise ValueError unless the box has positive size and finite fields."""
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"box field {name} is not finite: {v!r}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")
        return self

    @property
    def x_min(self) -> float:
        return self.x - self.w / 2.0

    @property
    def x_max(self) -> float:
        return self.x + self.w / 2.0

    @property
    def y_min(self) -> float:
        return self.y - self.h / 2.0

    @property
    def y_max(self) -> float:
        return self.y + self.h / 2.0

    def area(self) -> float:
        # Degenerate (non-positive) sizes contribute zero area so decoder
        # outputs early in training cannot produce negative overlaps.
        return max(self.w, 0.0) * max(self.h, 0.0)


def l1_distance(a: BoxGeometry, b: BoxGeometry) -> float:
    """L1 distance over all four box components (x, y, w, h)."""
    return abs(a.x - b.x) + abs(a.y - b.y) + abs(a.w - b.w) + abs(a.h - b.h)


def center_inside(candidate: BoxGeometry, gt: BoxGeometry) -> bool:
    """True iff the candidate's center lies within the gt extent (boundary inclusive)."""
    return (
        gt.x_min <= candidate.x <= gt.x_max
        and gt.y_min <= candidate.y <= gt.y_max
    )


def intersection_area(a: BoxGeometry, b: BoxGeometry) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def intersects(a: BoxGeometry, b: BoxGeometry) -> bool:
    """True iff the boxes overlap with positive area (edge contact does not count)."""
    return intersection_area(a, b) > 0.0


def iou(a: BoxGeometry, b: BoxGeometry) -> float:
    """Intersection over union, in [0, 1]. Zero when either box is degenerate."""
    inter = intersection_area(a, b)
    union = a.area() + b.area() - inter
    if union <= 0:
        return 0.0
    # Corner arithmetic can overshoot by an ulp for identical boxes.
    return min(inter / union, 1.0)
