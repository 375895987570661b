"""Set-prediction loss for a fixed matching and its analytic gradients.

The loss combines an L1 localization term over matched pairs, weighted by
alpha, with a cross-entropy term over every candidate's confidence, where
a candidate's label is 1 iff the matching assigned it a ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

from .geometry import BoxGeometry, l1_distance
from .matching import Candidate, Matching

DEFAULT_ALPHA = 0.03


@dataclass(frozen=True)
class LossBreakdown:
    position_term: float
    confidence_term: float
    total: float
    alpha: float


@dataclass(frozen=True)
class LossGradients:
    """Per-candidate gradients: 4-vectors w.r.t. (x, y, w, h) and scalars
    w.r.t. the pre-sigmoid confidence logit."""

    d_positions: List[List[float]]
    d_confidence_logits: List[float]


def confidence_labels(matching: Matching, n_candidates: int) -> List[int]:
    """Binary target per candidate: 1 iff assigned to some ground truth."""
    matched = matching.matched_candidates()
    if matched and max(matched) >= n_candidates:
        raise ValueError("matching refers to a candidate index out of range")
    return [1 if j in matched else 0 for j in range(n_candidates)]


def cross_entropy(confidence: float, label: int) -> float:
    """Binary cross-entropy; confidence must lie strictly inside (0, 1)."""
    if label:
        return -math.log(confidence)
    return -math.log(1.0 - confidence)


def loss_value(
    gts: Sequence[BoxGeometry],
    candidates: Sequence[Candidate],
    matching: Matching,
    alpha: float = DEFAULT_ALPHA,
) -> LossBreakdown:
    if len(matching) != len(gts):
        raise ValueError("matching must assign every ground truth")
    position = 0.0
    for i, gt in enumerate(gts):
        position += l1_distance(gt, candidates[matching.candidate_for(i)].geometry)
    position *= alpha
    labels = confidence_labels(matching, len(candidates))
    confidence = sum(
        cross_entropy(c.confidence, y) for c, y in zip(candidates, labels)
    )
    return LossBreakdown(position, confidence, position + confidence, alpha)


def _sign(v: float) -> float:
    # Subgradient choice at the L1 kink: sign(0) = 0.
    if v > 0:
        return 1.0
    if v < 0:
        return -1.0
    return 0.0


def loss_gradients(
    gts: Sequence[BoxGeometry],
    candidates: Sequence[Candidate],
    matching: Matching,
    alpha: float = DEFAULT_ALPHA,
) -> LossGradients:
    """Gradients of loss_value w.r.t. candidate positions and confidence logits.

    Position gradient of a matched candidate is alpha * sign(candidate - gt)
    per component; unmatched candidates get zero. The confidence gradient is
    taken w.r.t. the pre-sigmoid logit: sigmoid(logit) - label = c - y.
    """
    n = len(candidates)
    d_pos = [[0.0, 0.0, 0.0, 0.0] for _ in range(n)]
    for i, gt in enumerate(gts):
        j = matching.candidate_for(i)
        g = candidates[j].geometry
        d_pos[j][0] += alpha * _sign(g.x - gt.x)
        d_pos[j][1] += alpha * _sign(g.y - gt.y)
        d_pos[j][2] += alpha * _sign(g.w - gt.w)
        d_pos[j][3] += alpha * _sign(g.h - gt.h)
    labels = confidence_labels(matching, n)
    d_logit = [c.confidence - y for c, y in zip(candidates, labels)]
    return LossGradients(d_pos, d_logit)
