import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from geoforge.codec import SpatialToken
from geoforge.geometry import (
    GridPosition,
    OrientedBox,
    clamp_to_image,
    contains,
    corners,
    denormalize,
    grid_position,
    min_area_rect,
    normalize,
    polygon_area,
    rotated_iou,
    round_half_away,
    signed_area,
)

import oracles


class Img:
    def __init__(self, width, height):
        self.width, self.height = width, height


boxes = st.builds(
    OrientedBox,
    cx=st.floats(0, 1000), cy=st.floats(0, 1000),
    w=st.floats(0.5, 400), h=st.floats(0.5, 400),
    theta=st.floats(0, 89.99),
)


def test_axis_aligned_corners():
    pts = corners(OrientedBox(5, 5, 10, 10, 0))
    assert {tuple(map(float, p)) for p in pts} == {(0, 0), (10, 0), (10, 10), (0, 10)}


def test_square_at_45_has_corners_on_axes():
    pts = corners(OrientedBox(0, 0, 2, 2, 45))
    for x, y in pts:
        assert math.hypot(x, y) == pytest.approx(math.sqrt(2))
        assert min(abs(x), abs(y)) == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("theta,expect", [(90, (0.0, 10, 20)), (135, (45.0, 10, 20)), (-30, (60.0, 10, 20)),
                                          (180, (0.0, 20, 10)), (45, (45.0, 20, 10))])
def test_angle_folding(theta, expect):
    b = OrientedBox(0, 0, 20, 10, theta)
    assert (b.theta, b.w, b.h) == pytest.approx(expect)


def test_fold_preserves_polygon():
    a = OrientedBox(50, 50, 20, 10, 100)
    raw_t = math.radians(100)
    raw = [(50 + dx * math.cos(raw_t) - dy * math.sin(raw_t), 50 + dx * math.sin(raw_t) + dy * math.cos(raw_t))
           for dx, dy in [(-10, -5), (10, -5), (10, 5), (-10, 5)]]
    got = sorted((round(x, 9), round(y, 9)) for x, y in corners(a))
    assert got == sorted((round(x, 9), round(y, 9)) for x, y in raw)


@pytest.mark.parametrize("bad", [dict(w=0, h=1), dict(w=1, h=-2), dict(w=float("nan"), h=1)])
def test_invalid_boxes_rejected(bad):
    with pytest.raises(ValueError):
        OrientedBox(0, 0, theta=0, **bad)


@given(boxes)
def test_shoelace_area_and_ccw(b):
    pts = corners(b)
    assert oracles.shoelace(pts) == pytest.approx(b.w * b.h, rel=1e-9, abs=1e-9)
    assert signed_area(pts) > 0


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    ab, ba = rotated_iou(a, b), rotated_iou(b, a)
    assert 0.0 <= ab <= 1.0
    assert ab == pytest.approx(ba, abs=1e-9)


@given(boxes)
def test_iou_identity_exact(b):
    assert rotated_iou(b, b) == 1.0


def test_iou_disjoint_zero():
    assert rotated_iou(OrientedBox(0, 0, 10, 10, 30), OrientedBox(100, 100, 10, 10, 10)) == 0.0


def test_iou_matches_monte_carlo_small_sample():
    rng = np.random.default_rng(3)
    a = (50, 50, 20, 10, 0)
    b = OrientedBox(50, 50, 20, 10, 90)  # folds to (10, 20, 0)
    mc = oracles.monte_carlo_iou(a, b.as_tuple(), 400_000, rng)
    assert rotated_iou(OrientedBox(*a), b) == pytest.approx(1 / 3, abs=1e-12)
    assert mc == pytest.approx(1 / 3, abs=1e-2)


@given(boxes, st.floats(0.1, 0.95), st.floats(-0.4, 0.4), st.floats(-0.4, 0.4))
def test_contained_box_iou_is_area_ratio(outer, scale, fu, fv):
    t = math.radians(outer.theta)
    du, dv = fu * outer.w * (1 - scale), fv * outer.h * (1 - scale)
    inner = OrientedBox(outer.cx + du * math.cos(t) - dv * math.sin(t),
                        outer.cy + du * math.sin(t) + dv * math.cos(t),
                        outer.w * scale, outer.h * scale, outer.theta)
    assert contains(outer, inner)
    assert all(oracles.half_plane_contains(corners(outer), p, 1e-6) for p in corners(inner))
    assert rotated_iou(outer, inner) == pytest.approx(inner.area / outer.area, abs=1e-9)


def test_contains_closed_boundary():
    outer = OrientedBox(10, 10, 20, 20, 0)
    inner = OrientedBox(15, 15, 10, 10, 0)  # corner (20, 20) sits on outer's corner
    assert contains(outer, inner)
    assert not contains(outer, OrientedBox(25, 15, 10, 10, 0))


@given(boxes, boxes)
def test_contains_agrees_with_half_plane_oracle(a, b):
    ca = corners(a)
    expect = all(oracles.half_plane_contains(ca, p, 1e-9 * max(a.w, a.h, 1.0) * 0.5) for p in corners(b))
    loose = all(oracles.half_plane_contains(ca, p, 1e-9 * max(a.w, a.h, 1.0) * 2) for p in corners(b))
    got = contains(a, b)
    # allow disagreement only inside the tolerance band
    assert got in (expect, loose)


@given(boxes)
def test_mutual_containment_means_same_polygon(b):
    c = OrientedBox(b.cx, b.cy, b.w, b.h, b.theta)
    assert contains(b, c) and contains(c, b)


def test_grid_examples():
    im = Img(1024, 1024)
    assert grid_position((512, 512), im) is GridPosition.CENTER
    assert grid_position((0, 0), im) is GridPosition.TOP_LEFT
    # 3*341 = 1023 < 1024, so 341 is still in the first column
    assert grid_position((341, 0), im) is GridPosition.TOP_LEFT
    assert grid_position((342, 0), im) is GridPosition.TOP
    assert GridPosition.TOP_LEFT.text == "top left"


@pytest.mark.parametrize("pt", [(-1, 0), (0, 1024), (1024, 3)])
def test_grid_outside_raises(pt):
    with pytest.raises(ValueError):
        grid_position(pt, Img(1024, 1024))


@pytest.mark.parametrize("w,h", [(7, 5), (10, 10), (1024, 768), (13, 31)])
def test_grid_partitions_pixel_lattice(w, h):
    im = Img(w, h)
    counts = {}
    for x in range(w):
        for y in range(h):
            label = grid_position((x, y), im).name
            assert label == oracles.grid_label_int(x, y, w, h)
            counts[label] = counts.get(label, 0) + 1
    assert sum(counts.values()) == w * h
    if w >= 3 and h >= 3:
        assert len(counts) == 9


def test_normalize_examples():
    im = Img(1024, 1024)
    assert normalize(OrientedBox(512, 512, 1024, 1024, 0), im) == SpatialToken(0, 0, 100, 100, 0)
    assert normalize(OrientedBox(512, 512, 512, 512, 0), im) == SpatialToken(25, 25, 75, 75, 0)


def test_round_half_away():
    assert [round_half_away(x) for x in (0.5, 1.5, 2.5, -0.5, -2.5, 2.49)] == [1, 2, 3, -1, -3, 2]


@given(st.integers(50, 4000), st.integers(50, 4000), st.data())
def test_normalize_quantization_bound(W, H, data):
    im = Img(W, H)
    w = data.draw(st.floats(2, W * 0.9))
    h = data.draw(st.floats(2, H * 0.9))
    cx = data.draw(st.floats(w / 2, W - w / 2))
    cy = data.draw(st.floats(h / 2, H - h / 2))
    theta = data.draw(st.floats(0, 89.4))
    b = OrientedBox(cx, cy, w, h, theta)
    tok = normalize(b, im)
    back = denormalize(tok, im)
    assume(back.w > 1e-3 and back.h > 1e-3)
    # corner coordinates move by at most half a step: 0.5% of the dimension
    for got, want, dim in [(back.cx - back.w / 2, cx - w / 2, W), (back.cx + back.w / 2, cx + w / 2, W),
                           (back.cy - back.h / 2, cy - h / 2, H), (back.cy + back.h / 2, cy + h / 2, H)]:
        assert abs(got - want) <= 0.005 * dim + 1e-9
    assert normalize(back, im) == tok


def test_clamp_keeps_inside():
    im = Img(100, 100)
    b = clamp_to_image(OrientedBox(95, 50, 20, 10, 0), im)
    assert b.cx + b.w / 2 <= 100 + 1e-9


def test_min_area_rect_recovers_box():
    b = OrientedBox(40, 30, 24, 9, 33)
    r = min_area_rect(list(corners(b)))
    assert r.area == pytest.approx(b.area, rel=1e-9)
    assert rotated_iou(r, b) == pytest.approx(1.0, abs=1e-9)


def test_polygon_area_abs():
    assert polygon_area([(0, 0), (0, 2), (3, 2), (3, 0)]) == pytest.approx(6)
