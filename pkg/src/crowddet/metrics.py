"""Detection evaluation: PR curves, average precision, equal error rate,
and per-image count error, under the strict IoU > 0.5 criterion."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

from .geometry import BoxGeometry, iou

IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    precision: float
    recall: float


@dataclass
class PRCurve:
    """PR points at every distinct confidence, descending threshold."""

    points: List[PRPoint]


@dataclass(frozen=True)
class LabeledPrediction:
    confidence: float
    is_tp: bool


def match_for_eval(
    predictions: Sequence[Tuple[BoxGeometry, float]],
    ground_truth: Sequence[BoxGeometry],
) -> List[LabeledPrediction]:
    """Label each (box, confidence) prediction TP or FP for one image.

    Predictions are processed in descending confidence (ties by input
    order); a prediction claims the highest-IoU unclaimed ground truth if
    that IoU strictly exceeds 0.5, else it is a false positive.
    """
    order = sorted(range(len(predictions)), key=lambda k: (-predictions[k][1], k))
    claimed = [False] * len(ground_truth)
    labels: List[LabeledPrediction] = [None] * len(predictions)  # type: ignore[list-item]
    for k in order:
        box, conf = predictions[k]
        best_iou = IOU_THRESHOLD
        best_g = -1
        for g, gt in enumerate(ground_truth):
            if claimed[g]:
                continue
            v = iou(box, gt)
            if v > best_iou:
                best_iou = v
                best_g = g
        if best_g >= 0:
            claimed[best_g] = True
            labels[k] = LabeledPrediction(conf, True)
        else:
            labels[k] = LabeledPrediction(conf, False)
    return labels


def pr_curve(labeled: Sequence[LabeledPrediction], total_gt: int) -> PRCurve:
    """Precision/recall swept over every distinct confidence threshold."""
    if total_gt == 0 and labeled:
        raise ValueError("recall is undefined with predictions but no ground truth")
    ordered = sorted(labeled, key=lambda p: -p.confidence)
    points: List[PRPoint] = []
    tp = fp = 0
    k = 0
    n = len(ordered)
    while k < n:
        threshold = ordered[k].confidence
        while k < n and ordered[k].confidence == threshold:
            if ordered[k].is_tp:
                tp += 1
            else:
                fp += 1
            k += 1
        points.append(PRPoint(threshold, tp / (tp + fp), tp / total_gt))
    return PRCurve(points)


def average_precision(curve: PRCurve) -> float:
    """All-points interpolated AP: sum over recall increments of the maximum
    precision at or beyond that recall."""
    if not curve.points:
        return 0.0
    # Interpolated precision: running maximum from the low-threshold end.
    interp: List[float] = [0.0] * len(curve.points)
    running = 0.0
    for k in range(len(curve.points) - 1, -1, -1):
        running = max(running, curve.points[k].precision)
        interp[k] = running
    ap = 0.0
    prev_recall = 0.0
    for point, p_interp in zip(curve.points, interp):
        ap += (point.recall - prev_recall) * p_interp
        prev_recall = point.recall
    return ap


def equal_error_rate(curve: PRCurve) -> float:
    """The precision = recall operating value, linearly interpolated between
    the adjacent points straddling the sign change of precision - recall.
    With multiple crossings the one at highest recall wins; with none, the
    point minimizing |precision - recall| is reported."""
    if not curve.points:
        raise ValueError("EER of an empty curve")
    pts = curve.points
    if len(pts) == 1:
        p, r = pts[0].precision, pts[0].recall
        return (p + r) / 2.0 if p != r else p
    best = None
    for a, b in zip(pts, pts[1:]):
        da = a.precision - a.recall
        db = b.precision - b.recall
        if da == 0.0:
            best = a.precision
        if db == 0.0:
            best = b.precision
            continue
        if da * db < 0.0:
            t = da / (da - db)
            best = a.precision + t * (b.precision - a.precision)
    if best is not None:
        return best
    closest = min(pts, key=lambda q: abs(q.precision - q.recall))
    return (closest.precision + closest.recall) / 2.0


def count_error(
    predicted_counts: Sequence[int], ground_truth_counts: Sequence[int]
) -> float:
    """Mean absolute per-image difference between predicted and true counts."""
    if len(predicted_counts) != len(ground_truth_counts):
        raise ValueError("count sequences must cover the same image set")
    if not predicted_counts:
        raise ValueError("count_error of an empty image set")
    return sum(
        abs(p - g) for p, g in zip(predicted_counts, ground_truth_counts)
    ) / len(predicted_counts)


def best_count_threshold(
    per_image: Sequence[Tuple[Sequence[float], int]]
) -> Tuple[float, float]:
    """Pick the confidence threshold minimizing count error on a validation
    set. `per_image` pairs each image's prediction confidences with its
    ground-truth count. Returns (threshold, count_error at threshold)."""
    if not per_image:
        raise ValueError("no images to select a threshold on")
    thresholds = sorted({c for confs, _ in per_image for c in confs}, reverse=True)
    if not thresholds:
        return 0.5, count_error([0] * len(per_image), [g for _, g in per_image])
    best = None
    for t in thresholds:
        counts = [sum(1 for c in confs if c >= t) for confs, _ in per_image]
        err = count_error(counts, [g for _, g in per_image])
        if best is None or err < best[1]:
            best = (t, err)
    return best


@dataclass
class EvalSummary:
    ap: float
    eer: float
    count_error: float
    chosen_threshold: float


def evaluate(
    predictions_by_scene: Dict[str, List[Tuple[BoxGeometry, float]]],
    ground_truth_by_scene: Dict[str, List[BoxGeometry]],
) -> Tuple[EvalSummary, PRCurve]:
    """Full protocol over a scene set: pooled PR curve, AP, EER, and the
    count error at the threshold minimizing it on this same set."""
    labeled: List[LabeledPrediction] = []
    total_gt = 0
    per_image: List[Tuple[List[float], int]] = []
    for scene_id, gts in ground_truth_by_scene.items():
        preds = predictions_by_scene.get(scene_id, [])
        labeled.extend(match_for_eval(preds, gts))
        total_gt += len(gts)
        per_image.append(([c for _, c in preds], len(gts)))
    curve = pr_curve(labeled, total_gt)
    ap = average_precision(curve)
    eer = equal_error_rate(curve) if curve.points else 0.0
    threshold, err = best_count_threshold(per_image)
    return EvalSummary(ap=ap, eer=eer, count_error=err, chosen_threshold=threshold), curve
