"""Cost tuples and the three matching strategies, checked against the
exhaustive brute-force oracle."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crowddet.geometry import BoxGeometry
from crowddet.matching import (
    Candidate,
    CostTuple,
    Matching,
    match_bruteforce,
    match_firstk,
    match_fixed_order,
    match_hungarian,
    matching_total_cost,
    min_cost_assignment,
    pair_cost,
    sort_ground_truth,
    tuple_add,
    tuple_less,
    MODE_FIRSTK,
    MODE_HUNGARIAN,
)


def box(x, y, w=4.0, h=4.0):
    return BoxGeometry(x, y, w, h)


def cand(x, y, rank, w=4.0, h=4.0, conf=0.5):
    return Candidate(geometry=BoxGeometry(x, y, w, h), confidence=conf, rank=rank)


def random_instance(rng, n_gt, n_cand=5):
    gts = [box(rng.uniform(0, 60), rng.uniform(0, 60), rng.uniform(2, 20), rng.uniform(2, 20))
           for _ in range(n_gt)]
    cands = [
        cand(rng.uniform(0, 60), rng.uniform(0, 60), rank=j + 1,
             w=rng.uniform(2, 20), h=rng.uniform(2, 20))
        for j in range(n_cand)
    ]
    return gts, cands


# --- cost tuples ------------------------------------------------------------

def test_tuple_ordering_is_lexicographic():
    assert tuple_less(CostTuple(0, 5, 0.4), CostTuple(0, 6, 0.2))
    assert tuple_less(CostTuple(0, 6, 0.2), CostTuple(1, 4, 2.3))
    assert not tuple_less(CostTuple(1, 4, 2.3), CostTuple(0, 5, 0.4))
    assert not tuple_less(CostTuple(0, 5, 0.4), CostTuple(0, 5, 0.4))


def test_tuple_add_componentwise():
    s = tuple_add(CostTuple(0, 1, 0.3), CostTuple(1, 3, 2.0))
    assert s == CostTuple(1, 4, 2.3)


small = st.floats(0, 100, allow_nan=False)
tuples = st.builds(CostTuple, st.integers(0, 3), st.integers(0, 10), small)


@given(tuples, tuples, tuples)
def test_tuple_add_monotone(a, b, c):
    # Adding the same tuple preserves (non-strict) order despite float d.
    if tuple_less(a, b):
        assert not tuple_less(tuple_add(b, c), tuple_add(a, c))


def test_pair_cost_overlap_and_mode():
    gt = box(10, 10, 4, 4)
    inside = cand(11, 10, rank=2)
    outside = cand(20, 10, rank=2)
    assert pair_cost(gt, inside, MODE_HUNGARIAN) == CostTuple(0, 2, 1.0)
    assert pair_cost(gt, outside, MODE_HUNGARIAN).o == 1
    # first-k mode drops the overlap term entirely
    assert pair_cost(gt, outside, MODE_FIRSTK).o == 0
    with pytest.raises(ValueError):
        pair_cost(gt, inside, "nonsense")


# --- canonical ordering and fixed-order matching ----------------------------

def test_sort_ground_truth_top_to_bottom_then_left_to_right():
    boxes = [box(5, 20), box(30, 10), box(10, 10)]
    assert sort_ground_truth(boxes) == [2, 1, 0]


def test_sort_ground_truth_tie_falls_back_to_input_order():
    boxes = [box(10, 10), box(10, 10)]
    assert sort_ground_truth(boxes) == [0, 1]


def test_match_fixed_order_assigns_by_rank():
    gts = [box(30, 30), box(10, 10)]
    cands = [cand(0, 0, rank=r) for r in (1, 2, 3)]
    m = match_fixed_order(gts, cands)
    # gt index 1 is topmost, so it takes the rank-1 candidate
    assert m.assignment == {1: 0, 0: 1}


def test_match_rejects_more_gts_than_candidates():
    gts = [box(0, 0), box(10, 10)]
    cands = [cand(0, 0, rank=1)]
    for fn in (match_fixed_order, match_hungarian, match_firstk, match_bruteforce):
        with pytest.raises(ValueError):
            fn(gts, cands)


def test_matching_injectivity_enforced():
    with pytest.raises(ValueError):
        Matching({0: 1, 1: 1})


def test_empty_ground_truth_gives_empty_matching():
    cands = [cand(0, 0, rank=1)]
    assert len(match_hungarian([], cands)) == 0
    assert len(match_firstk([], cands)) == 0
    assert len(match_bruteforce([], cands)) == 0


# --- hungarian vs brute force -----------------------------------------------

@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 5), st.sampled_from([MODE_HUNGARIAN, MODE_FIRSTK]))
def test_hungarian_matches_bruteforce(seed, n_gt, mode):
    rng = np.random.default_rng(seed)
    gts, cands = random_instance(rng, n_gt)
    a = match_hungarian(gts, cands, mode=mode)
    b = match_bruteforce(gts, cands, mode=mode)
    assert a.assignment == b.assignment


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_hungarian_total_cost_never_above_any_permutation(seed, n_gt):
    import itertools
    from fractions import Fraction

    rng = np.random.default_rng(seed)
    gts, cands = random_instance(rng, n_gt)

    def exact_total(matching):
        o = r = 0
        d = Fraction(0)
        for i, j in matching.assignment.items():
            c = pair_cost(gts[i], cands[j])
            o, r, d = o + c.o, r + c.r, d + Fraction(c.d)
        return (o, r, d)

    best = exact_total(match_hungarian(gts, cands))
    for vec in itertools.permutations(range(len(cands)), n_gt):
        assert best <= exact_total(Matching(dict(enumerate(vec))))


def test_firstk_restricts_to_lowest_ranks():
    gts = [box(10, 10), box(50, 50)]
    # rank-4/5 candidates sit exactly on the gts; firstk cannot use them
    cands = [
        cand(30, 30, rank=1),
        cand(32, 30, rank=2),
        cand(34, 30, rank=3),
        cand(10, 10, rank=4),
        cand(50, 50, rank=5),
    ]
    m = match_firstk(gts, cands)
    assert m.matched_candidates() == {0, 1}
    full = match_hungarian(gts, cands)
    assert full.matched_candidates() == {3, 4}


def test_bruteforce_rejects_oversized_instances():
    gts = [box(0, 0)]
    cands = [cand(i, 0, rank=i + 1) for i in range(9)]
    with pytest.raises(ValueError):
        match_bruteforce(gts, cands)


# --- generic assignment solver ----------------------------------------------

def test_min_cost_assignment_simple():
    matrix = [
        [(4,), (1,), (3,)],
        [(2,), (0,), (5,)],
        [(3,), (2,), (2,)],
    ]
    assert min_cost_assignment(matrix) == [1, 0, 2]


def test_min_cost_assignment_rectangular():
    matrix = [[(5,), (1,), (9,)]]
    assert min_cost_assignment(matrix) == [1]
    with pytest.raises(ValueError):
        min_cost_assignment([[(1,)], [(2,)]])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 3))
def test_min_cost_assignment_matches_exhaustive(seed, n, extra):
    import itertools

    rng = np.random.default_rng(seed)
    m = n + extra
    costs = rng.integers(0, 50, size=(n, m))
    matrix = [[(int(costs[i, j]),) for j in range(m)] for i in range(n)]
    got = min_cost_assignment(matrix)
    best = min(
        sum(costs[i, vec[i]] for i in range(n))
        for vec in itertools.permutations(range(m), n)
    )
    assert sum(costs[i, got[i]] for i in range(n)) == best
    assert len(set(got)) == n
