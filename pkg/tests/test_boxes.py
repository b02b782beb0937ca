"""IoU / gIoU contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clipdet.boxes import BoxError, cxcywh_to_xyxy, giou, iou, xyxy_to_cxcywh


def random_box(rng):
    x1, y1 = rng.uniform(0, 8, size=2)
    w, h = rng.uniform(0.2, 6, size=2)
    return (x1, y1, x1 + w, y1 + h)


coord = st.floats(min_value=0.0, max_value=50.0, allow_nan=False)
side = st.floats(min_value=0.1, max_value=20.0, allow_nan=False)


@st.composite
def boxes_strategy(draw):
    x1, y1 = draw(coord), draw(coord)
    return (x1, y1, x1 + draw(side), y1 + draw(side))


class TestIou:
    def test_identical_boxes(self):
        assert iou((0, 0, 2, 2), (0, 0, 2, 2)) == 1.0

    def test_disjoint_boxes(self):
        assert iou((0, 0, 1, 1), (5, 5, 6, 6)) == 0.0

    def test_quarter_overlap_case(self):
        # (0,0,2,2) vs (1,1,3,3): intersection 1, union 7
        assert iou((0, 0, 2, 2), (1, 1, 3, 3)) == pytest.approx(1 / 7, abs=1e-15)

    def test_degenerate_box_rejected(self):
        with pytest.raises(BoxError):
            iou((0, 0, 0, 1), (0, 0, 1, 1))


class TestGiou:
    def test_identical_boxes(self):
        assert giou((0, 0, 1, 1), (0, 0, 1, 1)) == 1.0

    def test_disjoint_hand_case(self):
        # IoU 0, union 2, enclosing 3 -> -(3-2)/3
        assert giou((0, 0, 1, 1), (2, 0, 3, 1)) == pytest.approx(-1 / 3, abs=1e-15)

    def test_symmetry_100_random_pairs(self, rng):
        for _ in range(100):
            a, b = random_box(rng), random_box(rng)
            assert giou(a, b) == pytest.approx(giou(b, a), abs=1e-12)

    @given(boxes_strategy(), boxes_strategy())
    @settings(max_examples=200, deadline=None)
    def test_range_and_upper_bound(self, a, b):
        g = giou(a, b)
        assert -1.0 < g <= 1.0
        assert g <= iou(a, b) + 1e-12

    def test_far_apart_approaches_minus_one(self):
        assert giou((0, 0, 1, 1), (999, 0, 1000, 1)) < -0.99


class TestConversions:
    def test_round_trip(self, rng):
        for _ in range(20):
            b = random_box(rng)
            assert np.allclose(cxcywh_to_xyxy(xyxy_to_cxcywh(b)), b, atol=1e-12)
