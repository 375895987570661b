"""Box geometry: areas, intersection, IoU, and the center-inside predicate."""

import math

import pytest
from hypothesis import given, strategies as st

from crowddet.geometry import (
    BoxGeometry,
    center_inside,
    intersection_area,
    intersects,
    iou,
    l1_distance,
)

coord = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
size = st.floats(0.01, 1e3, allow_nan=False, allow_infinity=False)
any_size = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)

valid_boxes = st.builds(BoxGeometry, coord, coord, size, size)
any_boxes = st.builds(BoxGeometry, coord, coord, any_size, any_size)


def test_extent_properties():
    b = BoxGeometry(10.0, 20.0, 4.0, 6.0)
    assert b.x_min == 8.0 and b.x_max == 12.0
    assert b.y_min == 17.0 and b.y_max == 23.0
    assert b.area() == 24.0


def test_validate_rejects_degenerate_and_nonfinite():
    with pytest.raises(ValueError):
        BoxGeometry(0, 0, 0.0, 1.0).validate()
    with pytest.raises(ValueError):
        BoxGeometry(0, 0, 1.0, -2.0).validate()
    with pytest.raises(ValueError):
        BoxGeometry(math.nan, 0, 1.0, 1.0).validate()
    with pytest.raises(ValueError):
        BoxGeometry(0, math.inf, 1.0, 1.0).validate()
    assert BoxGeometry(0, 0, 1.0, 1.0).validate() is not None


def test_degenerate_area_clamps_to_zero():
    assert BoxGeometry(0, 0, -3.0, 5.0).area() == 0.0
    assert BoxGeometry(0, 0, -3.0, -5.0).area() == 0.0


def test_l1_distance_spans_all_four_components():
    a = BoxGeometry(0, 0, 2, 2)
    b = BoxGeometry(1, -2, 5, 2.5)
    assert l1_distance(a, b) == pytest.approx(1 + 2 + 3 + 0.5)


@given(any_boxes, any_boxes)
def test_l1_distance_symmetric_and_nonnegative(a, b):
    assert l1_distance(a, b) == l1_distance(b, a) >= 0.0
    assert l1_distance(a, a) == 0.0


def test_center_inside_boundary_is_inclusive():
    gt = BoxGeometry(10, 10, 4, 4)
    assert center_inside(BoxGeometry(12.0, 10.0, 1, 1), gt)  # on the edge
    assert center_inside(BoxGeometry(8.0, 12.0, 1, 1), gt)  # on the corner
    assert not center_inside(BoxGeometry(12.0001, 10.0, 1, 1), gt)


def test_intersection_area_hand_case():
    a = BoxGeometry(0, 0, 4, 4)
    b = BoxGeometry(2, 2, 4, 4)
    assert intersection_area(a, b) == pytest.approx(4.0)


def test_edge_contact_does_not_intersect():
    a = BoxGeometry(0, 0, 4, 4)
    b = BoxGeometry(4, 0, 4, 4)  # shares the x = 2 edge
    assert intersection_area(a, b) == 0.0
    assert not intersects(a, b)


@given(any_boxes, valid_boxes)
def test_degenerate_boxes_never_intersect(a, b):
    if a.w <= 0 or a.h <= 0:
        assert not intersects(a, b)
        assert iou(a, b) == 0.0


@given(valid_boxes, valid_boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(valid_boxes)
def test_iou_with_self_is_one(b):
    assert iou(b, b) == pytest.approx(1.0)


def test_iou_hand_case():
    a = BoxGeometry(0, 0, 4, 4)
    b = BoxGeometry(2, 0, 4, 4)
    # intersection 8, union 24
    assert iou(a, b) == pytest.approx(8.0 / 24.0)


@given(valid_boxes, valid_boxes)
def test_intersection_no_larger_than_either_box(a, b):
    inter = intersection_area(a, b)
    assert inter <= a.area() + 1e-9
    assert inter <= b.area() + 1e-9
