"""Lexicographic cost tuples and ground-truth/candidate matching.

The matcher assigns each ground-truth box to exactly one candidate so that
the sum of pairwise cost tuples, compared lexicographically, is minimal.
Three strategies are provided: fixed-order assignment, first-k assignment,
and a full Hungarian assignment over (overlap-miss, rank, distance) tuples,
plus an exhaustive brute-force oracle for testing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Sequence

from .geometry import BoxGeometry, center_inside, l1_distance

MODE_HUNGARIAN = "hungarian"
MODE_FIRSTK = "firstk"

BRUTEFORCE_LIMIT = 8


@dataclass(frozen=True)
class CostTuple:
    """Pairwise matching weight: overlap-miss flag, candidate rank, L1 distance.

    Compared lexicographically: overlap dominates rank, rank dominates
    distance. Summed costs carry o and r values beyond the pairwise ranges.
    """

    o: int
    r: int
    d: float

    def as_tuple(self):
        return (self.o, self.r, self.d)


def tuple_add(a: CostTuple, b: CostTuple) -> CostTuple:
    return CostTuple(a.o + b.o, a.r + b.r, a.d + b.d)


def tuple_less(a: CostTuple, b: CostTuple) -> bool:
    return a.as_tuple() < b.as_tuple()


@dataclass(frozen=True)
class Candidate:
    """A decoder emission: box geometry, confidence in [0, 1], 1-based rank."""

    geometry: BoxGeometry
    confidence: float
    rank: int


@dataclass(frozen=True)
class Matching:
    """Injective map from ground-truth index to candidate index (0-based)."""

    assignment: Dict[int, int]

    def __post_init__(self):
        values = list(self.assignment.values())
        if len(set(values)) != len(values):
            raise ValueError("matching is not injective")

    def candidate_for(self, gt_index: int) -> int:
        return self.assignment[gt_index]

    def matched_candidates(self) -> set:
        return set(self.assignment.values())

    def __len__(self) -> int:
        return len(self.assignment)


def pair_cost(gt: BoxGeometry, cand: Candidate, mode: str = MODE_HUNGARIAN) -> CostTuple:
    """Cost tuple of matching one ground truth to one candidate.

    In first-k mode the overlap-miss component is forced to zero.
    """
    if mode == MODE_FIRSTK:
        o = 0
    elif mode == MODE_HUNGARIAN:
        o = 0 if center_inside(cand.geometry, gt) else 1
    else:
        raise ValueError(f"unknown matching mode: {mode!r}")
    return CostTuple(o, cand.rank, l1_distance(gt, cand.geometry))


def sort_ground_truth(boxes: Sequence[BoxGeometry]) -> List[int]:
    """Indices ordered top to bottom, then left to right, then input order."""
    return sorted(range(len(boxes)), key=lambda i: (boxes[i].y, boxes[i].x, i))


def match_fixed_order(
    gts: Sequence[BoxGeometry], candidates: Sequence[Candidate]
) -> Matching:
    """Assign the i-th sorted ground truth to the candidate of rank i."""
    if len(gts) > len(candidates):
        raise ValueError(
            f"cannot match {len(gts)} ground truths to {len(candidates)} candidates"
        )
    by_rank = sorted(range(len(candidates)), key=lambda j: candidates[j].rank)
    order = sort_ground_truth(gts)
    return Matching({gt_i: by_rank[pos] for pos, gt_i in enumerate(order)})


def _exact_cost(gt: BoxGeometry, cand: Candidate, mode: str):
    """(o, r, d) with d as an exact Fraction, for tie-free optimization."""
    c = pair_cost(gt, cand, mode)
    return (c.o, c.r, Fraction(c.d))


def _solve(
    gts: Sequence[BoxGeometry],
    candidates: Sequence[Candidate],
    mode: str,
    solver,
) -> Matching:
    if len(gts) > len(candidates):
        raise ValueError(
            f"cannot match {len(gts)} ground truths to {len(candidates)} candidates"
        )
    if not gts:
        return Matching({})
    order = sort_ground_truth(gts)
    n, m = len(gts), len(candidates)
    # A trailing integer component ranks equal-cost matchings by their
    # assignment vector (candidate indices in ground-truth sort order), so
    # both solvers deterministically return the lexicographically smallest.
    base = m + 1
    matrix = [
        [
            _exact_cost(gts[gt_i], candidates[j], mode) + ((j + 1) * base ** (n - 1 - p),)
            for j in range(m)
        ]
        for p, gt_i in enumerate(order)
    ]
    row_to_col = solver(matrix)
    return Matching({gt_i: row_to_col[p] for p, gt_i in enumerate(order)})


def match_hungarian(
    gts: Sequence[BoxGeometry],
    candidates: Sequence[Candidate],
    mode: str = MODE_HUNGARIAN,
) -> Matching:
    """Minimum-cost injective matching via the Hungarian algorithm."""
    return _solve(gts, candidates, mode, min_cost_assignment)


def match_firstk(
    gts: Sequence[BoxGeometry], candidates: Sequence[Candidate]
) -> Matching:
    """Match against only the first |G| ranked candidates, overlap term removed."""
    if len(gts) > len(candidates):
        raise ValueError(
            f"cannot match {len(gts)} ground truths to {len(candidates)} candidates"
        )
    by_rank = sorted(range(len(candidates)), key=lambda j: candidates[j].rank)
    keep = sorted(by_rank[: len(gts)])
    sub = match_hungarian(gts, [candidates[j] for j in keep], mode=MODE_FIRSTK)
    return Matching({i: keep[j] for i, j in sub.assignment.items()})


def match_bruteforce(
    gts: Sequence[BoxGeometry],
    candidates: Sequence[Candidate],
    mode: str = MODE_HUNGARIAN,
) -> Matching:
    """Exhaustive minimum over all injective assignments. Test oracle only."""
    if len(gts) > len(candidates):
        raise ValueError(
            f"cannot match {len(gts)} ground truths to {len(candidates)} candidates"
        )
    if len(candidates) > BRUTEFORCE_LIMIT:
        raise ValueError(f"instance too large for brute force: |C|={len(candidates)}")
    if not gts:
        return Matching({})
    order = sort_ground_truth(gts)
    costs = [[_exact_cost(gts[gt_i], c, mode) for c in candidates] for gt_i in order]
    best_key = None
    best_vec = None
    for vec in itertools.permutations(range(len(candidates)), len(gts)):
        o = sum(costs[p][j][0] for p, j in enumerate(vec))
        r = sum(costs[p][j][1] for p, j in enumerate(vec))
        d = sum((costs[p][j][2] for p, j in enumerate(vec)), Fraction(0))
        key = (o, r, d, vec)
        if best_key is None or key < best_key:
            best_key = key
            best_vec = vec
    return Matching({gt_i: best_vec[p] for p, gt_i in enumerate(order)})


def matching_total_cost(
    gts: Sequence[BoxGeometry],
    candidates: Sequence[Candidate],
    matching: Matching,
    mode: str = MODE_HUNGARIAN,
) -> CostTuple:
    """Sum of pairwise costs of a matching, accumulated in sorted gt order."""
    total = CostTuple(0, 0, 0.0)
    for gt_i in sort_ground_truth(gts):
        if gt_i in matching.assignment:
            total = tuple_add(
                total, pair_cost(gts[gt_i], candidates[matching.assignment[gt_i]], mode)
            )
    return total


def min_cost_assignment(matrix: List[List[tuple]]) -> List[int]:
    """Minimum-cost assignment of rows to columns for a rectangular matrix.

    Kuhn-Munkres with potentials, generic over cost tuples compared
    lexicographically with element-wise addition and subtraction. Requires
    len(matrix) <= len(matrix[0]); returns the matched column per row.
    Exact component types (int, Fraction) keep the optimum tie-free.
    """
    n = len(matrix)
    m = len(matrix[0])
    if n > m:
        raise ValueError("matrix must have at least as many columns as rows")
    width = len(matrix[0][0])
    zero = (0,) * width
    inf = (math.inf,) * width

    def add(a, b):
        return tuple(x + y for x, y in zip(a, b))

    def sub(a, b):
        return tuple(x - y for x, y in zip(a, b))

    u = [zero] * (n + 1)
    v = [zero] * (m + 1)
    match_col = [0] * (m + 1)  # 1-based row matched to each column, 0 = free
    way = [0] * (m + 1)
    for i in range(1, n + 1):
        match_col[0] = i
        j0 = 0
        minv = [inf] * (m + 1)
        used = [False] * (m + 1)
        while True:
            used[j0] = True
            i0 = match_col[j0]
            delta = inf
            j1 = -1
            for j in range(1, m + 1):
                if used[j]:
                    continue
                cur = sub(sub(matrix[i0 - 1][j - 1], u[i0]), v[j])
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(m + 1):
                if used[j]:
                    u[match_col[j]] = add(u[match_col[j]], delta)
                    v[j] = sub(v[j], delta)
                else:
                    minv[j] = sub(minv[j], delta)
            j0 = j1
            if match_col[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match_col[j0] = match_col[j1]
            j0 = j1
    result = [-1] * n
    for j in range(1, m + 1):
        if match_col[j]:
            result[match_col[j] - 1] = j - 1
    return result
