import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cuetrack.core import (BoundingBox, Detection, FeatureBundle, Frame, GeometryError, class_agnostic_nms,
                           ioc, iou, normalize_box)

from conftest import random_boxes


def raster_area(mask_a, mask_b=None):
    return int(mask_a.sum() if mask_b is None else (mask_a & mask_b).sum())


def raster(box, size=40):
    """Pixel mask of an integer-coordinate box."""
    m = np.zeros((size, size), dtype=bool)
    m[int(box[1]):int(box[3]), int(box[0]):int(box[2])] = True
    return m


def test_box_validation():
    with pytest.raises(GeometryError):
        BoundingBox(1, 0, 1, 2)
    with pytest.raises(GeometryError):
        BoundingBox(0, 2, 1, 1)
    with pytest.raises(GeometryError):
        BoundingBox(0, 0, float("nan"), 1)
    b = BoundingBox(0, 0, 4, 2)
    assert b.area == 8 and b.center == (2, 1)


def test_iou_examples():
    a = BoundingBox(0, 0, 2, 2)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(1, 0, 3, 2)) == pytest.approx(1 / 3)
    assert iou(a, BoundingBox(2, 0, 4, 2)) == 0.0  # touching edges share no area
    assert iou(a, BoundingBox(5, 5, 6, 6)) == 0.0


def test_ioc_examples():
    parent = BoundingBox(0, 0, 10, 10)
    assert ioc(parent, BoundingBox(2, 2, 4, 4)) == 1.0
    assert ioc(parent, BoundingBox(8, 0, 12, 10)) == pytest.approx(0.5)
    # asymmetric: the parent is mostly outside the child
    assert ioc(BoundingBox(2, 2, 4, 4), parent) == pytest.approx(0.04)


def test_iou_ioc_match_pixel_raster(rng):
    boxes = random_boxes(rng, 400, size=40, integer=True)
    for a, b in zip(boxes[::2], boxes[1::2]):
        ma, mb = raster(a), raster(b)
        inter = raster_area(ma, mb)
        union = raster_area(ma) + raster_area(mb) - inter
        ba, bb = BoundingBox.from_seq(a), BoundingBox.from_seq(b)
        assert iou(ba, bb) == pytest.approx(inter / union, abs=1e-12)
        assert ioc(ba, bb) == pytest.approx(inter / raster_area(mb), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 500), min_size=8, max_size=8), st.floats(0.01, 100))
def test_iou_scale_invariant_and_bounded(coords, k):
    a = [min(coords[0], coords[2]), min(coords[1], coords[3]),
         max(coords[0], coords[2]) + 1, max(coords[1], coords[3]) + 1]
    b = [min(coords[4], coords[6]), min(coords[5], coords[7]),
         max(coords[4], coords[6]) + 1, max(coords[5], coords[7]) + 1]
    ba, bb = BoundingBox.from_seq(a), BoundingBox.from_seq(b)
    v = iou(ba, bb)
    assert 0.0 <= v <= 1.0
    assert v == pytest.approx(iou(bb, ba), abs=1e-12)
    assert iou(ba.scaled(k), bb.scaled(k)) == pytest.approx(v, abs=1e-9)
    c = ioc(ba, bb)
    assert 0.0 <= c <= 1.0
    assert c >= v - 1e-12  # the child area never exceeds the union


def test_normalize_box():
    out = normalize_box(BoundingBox(10, 20, 30, 60), (100, 200))
    np.testing.assert_allclose(out, [0.2, 0.2, 0.2, 0.2])
    with pytest.raises(GeometryError):
        normalize_box(BoundingBox(0, 0, 1, 1), (0, 10))


def test_feature_bundle_validation():
    FeatureBundle(np.ones(4), np.ones(4), np.ones(4))
    with pytest.raises(ValueError):
        FeatureBundle(np.ones(4), np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        FeatureBundle(np.array([1.0, np.inf]), np.ones(2), np.ones(2))


def _det(box, score, cls=0, d=4):
    return Detection(BoundingBox.from_seq(box), cls, score, np.ones(d), np.ones(d))


def test_detection_score_range():
    with pytest.raises(ValueError):
        _det([0, 0, 1, 1], 1.5)


def test_frame_clips_boxes_and_fills_location():
    f = Frame(0, (100, 50), [_det([-10, 10, 50, 80], 0.9)])
    box = f.detections[0].box
    assert (box.x1, box.y2) == (0, 50)
    np.testing.assert_allclose(f.detections[0].raw_loc, normalize_box(box, (100, 50)))


def test_nms_examples():
    dets = [_det([0, 0, 10, 10], 0.9), _det([1, 0, 11, 10], 0.8), _det([50, 50, 60, 60], 0.7)]
    kept = class_agnostic_nms(dets, 0.5)
    assert [d.score for d in kept] == [0.9, 0.7]
    # suppression ignores class labels
    dets[1] = _det([1, 0, 11, 10], 0.8, cls=3)
    assert len(class_agnostic_nms(dets, 0.5)) == 2
    assert class_agnostic_nms([], 0.5) == []


def test_nms_equal_scores_tie_break_is_deterministic():
    a, b = _det([5, 0, 15, 10], 0.5), _det([0, 0, 10, 10], 0.5)
    assert class_agnostic_nms([a, b], 0.3)[0] is b
    assert class_agnostic_nms([b, a], 0.3)[0] is b


def test_iou_symmetric_matrix_property(rng):
    boxes = random_boxes(rng, 30)
    for i in range(30):
        assert math.isclose(iou(BoundingBox.from_seq(boxes[i]), BoundingBox.from_seq(boxes[i])), 1.0)
