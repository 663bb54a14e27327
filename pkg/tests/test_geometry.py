import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import iou_ref
from tlrelevance.errors import ValidationError
from tlrelevance.geometry import BBox, Detection, Frame, GroundTruth, center_deviation, iou
from tlrelevance.taxonomy import ArrowClass, Pictogram, State, TLClass

coord = st.floats(-500, 500, allow_nan=False)
size = st.floats(0.5, 200, allow_nan=False)
boxes = st.builds(BBox, coord, coord, size, size)


def test_iou_one_third_example():
    a = BBox.from_xyxy(0, 0, 10, 10)
    b = BBox.from_xyxy(5, 0, 15, 10)
    assert iou(a, b) == pytest.approx(1 / 3)


def test_iou_disjoint_and_touching():
    a = BBox.from_xyxy(0, 0, 10, 10)
    assert iou(a, BBox.from_xyxy(20, 20, 30, 30)) == 0.0
    assert iou(a, BBox.from_xyxy(10, 0, 20, 10)) == 0.0


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    assert iou(a, b) == iou(b, a)
    assert 0.0 <= iou(a, b) <= 1.0
    assert iou(a, b) == pytest.approx(iou_ref(a.as_list(), b.as_list()), abs=1e-12)


@given(boxes)
def test_iou_self_is_one(a):
    assert iou(a, a) == pytest.approx(1.0, abs=1e-9)


@given(boxes, boxes)
def test_iou_one_implies_equal(a, b):
    if iou(a, b) > 1 - 1e-12:
        for u, v in zip(a.as_list(), b.as_list()):
            assert u == pytest.approx(v, abs=1e-4)


@given(boxes, boxes, st.floats(-100, 100), st.floats(-100, 100))
def test_iou_translation_invariant(a, b, dx, dy):
    assert iou(a.translated(dx, dy), b.translated(dx, dy)) == pytest.approx(iou(a, b), abs=1e-9)


@given(st.floats(1, 2000), st.floats(0, 1), size)
def test_center_deviation_mirror_antisymmetric(width, frac, w):
    b = BBox(frac * width, 10.0, w, w)
    assert center_deviation(b.mirrored(width), width) == pytest.approx(-center_deviation(b, width), abs=1e-12)


def test_center_deviation_example():
    assert center_deviation(BBox(512, 100, 10, 10), 2048) == -0.25
    assert center_deviation(BBox(1024, 100, 10, 10), 2048) == 0.0


@pytest.mark.parametrize("args", [(0, 0, 0, 5), (0, 0, 5, -1), (math.nan, 0, 1, 1), (0, math.inf, 1, 1)])
def test_bbox_rejects_bad_values(args):
    with pytest.raises(ValidationError):
        BBox(*args)


def test_xyxy_round_trip():
    b = BBox.from_xyxy(10, 20, 30, 60)
    assert b.as_list() == [20, 40, 20, 40]
    assert b.xyxy() == (10, 20, 30, 60)


def test_clamp():
    inside = BBox(50, 50, 10, 10)
    assert inside.clamped(100, 100) is inside
    assert BBox(0, 50, 10, 10).clamped(100, 100).xyxy() == (0, 45, 5, 55)
    with pytest.raises(ValidationError):
        BBox(-50, 50, 10, 10).clamped(100, 100)


def test_records_validation():
    box = BBox(10, 10, 4, 4)
    with pytest.raises(ValidationError):
        Detection(box, ArrowClass.LEFT, 1.5)
    with pytest.raises(ValidationError):
        GroundTruth(box, TLClass(State.RED, Pictogram.CIRCLE), relevant=True)
    with pytest.raises(ValidationError):
        Frame("f", 0, 10)


def test_frame_splits_lights_and_arrows():
    box = BBox(10, 10, 4, 4)
    light = Detection(box, TLClass(State.RED, Pictogram.CIRCLE), 0.9)
    arrow = Detection(box, ArrowClass.LEFT, 0.8)
    fr = Frame("f", 100, 100, (arrow, light))
    assert fr.lights == [light]
    assert fr.arrows == [arrow]
